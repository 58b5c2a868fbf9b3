// dfn: offline enhancement, benchmarking and the live control service.

#include <csignal>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "dfn/cli.hpp"
#include "dfn/service.hpp"

namespace {

int serve(const std::string& addr, const std::string& loop_file, const dfn::cli::CliInvocation& inv) {
  using namespace dfn;
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) {
    std::cerr << "error: --serve expects HOST:PORT\n";
    return cli::kInvalidInvocation;
  }
  service::ServerOptions opts;
  opts.address = addr.substr(0, colon);
  try {
    opts.port = static_cast<unsigned short>(std::stoi(addr.substr(colon + 1)));
  } catch (const std::exception&) {
    std::cerr << "error: bad port in --serve " << addr << "\n";
    return cli::kInvalidInvocation;
  }

  std::unique_ptr<service::HopSource> source;
  try {
    source = std::make_unique<service::FileLoopSource>(
        service::FileLoopSource::from_files(loop_file, inv.clean.value_or("")));
  } catch (const wav::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kInvalidInvocation;
  } catch (const wav::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kIoError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kInvalidInvocation;
  }

  try {
    Engine engine(cli::make_config(inv), source->has_clean());
    service::ControlServer server(engine, std::move(source), opts);
    server.start();
    std::cout << "serving ws://" << opts.address << ":" << server.port() << "/control (healthz at /healthz)"
              << std::endl;
    boost::asio::io_context signals_io;
    boost::asio::signal_set signals(signals_io, SIGINT, SIGTERM);
    signals.async_wait([](const boost::system::error_code&, int) {});
    signals_io.run();
    server.stop();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kInvalidInvocation;
  } catch (const boost::system::system_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kIoError;
  }
  return cli::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace dfn;
  cli::CliInvocation inv;
  std::string estimator = "blind";
  std::string serve_addr, loop_file;
  bool dump_erb = false;

  CLI::App app{"Two-stage real-time speech enhancement (ERB gains + deep filtering)"};
  app.add_option("--input", inv.input, "Noisy mono 48 kHz WAV (PCM16 or float32)");
  app.add_option("--output", inv.output, "Enhanced WAV, same length and sample format as the input");
  app.add_option("--clean", inv.clean, "Clean reference WAV (required by the oracle estimator)");
  app.add_option("--estimator", estimator, "passthrough | blind | oracle")
      ->check(CLI::IsMember({"passthrough", "blind", "oracle"}));
  app.add_option("--atten-db", inv.atten_db, "Maximum attenuation in dB (>= 0)");
  app.add_option("--silence-below-db", inv.silence_below_db, "Silence both stages below this local SNR");
  app.add_option("--df-off-above-db", inv.df_off_above_db, "Disable deep filtering above this local SNR");
  app.add_flag("--no-erb", inv.no_erb, "Disable the ERB gain stage");
  app.add_flag("--no-df", inv.no_df, "Disable the deep-filtering stage");
  app.add_flag("--rtf", inv.rtf, "Print a one-line timing summary");
  app.add_option("--meters", inv.meters_csv, "Write per-frame meters as CSV");
  app.add_option("--serve", serve_addr, "Run the control service on HOST:PORT");
  app.add_option("--loop-file", loop_file, "Audio file looped by the control service");
  app.add_flag("--dump-erb-layout", dump_erb, "Print the ERB band table and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kInvalidInvocation;
  }
  parse_estimator_kind(estimator, inv.estimator);

  if (dump_erb) {
    std::cout << format_layout(design_layout(StftConfig{}));
    return cli::kOk;
  }
  if (!serve_addr.empty()) {
    if (loop_file.empty()) {
      std::cerr << "error: --serve requires --loop-file\n";
      return cli::kInvalidInvocation;
    }
    return serve(serve_addr, loop_file, inv);
  }
  if (inv.input.empty() || inv.output.empty()) {
    std::cerr << "error: --input and --output are required\n";
    return cli::kInvalidInvocation;
  }
  return cli::run(inv, std::cout, std::cerr);
}
