#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dfn/engine.hpp"
#include "dfn/wav.hpp"

namespace dfn::cli {

enum ExitCode : int { kOk = 0, kIoError = 1, kInvalidInvocation = 2 };

struct CliInvocation {
  std::string input;
  std::optional<std::string> clean;
  std::string output;
  EstimatorKind estimator = EstimatorKind::blind;
  std::optional<float> atten_db;
  std::optional<float> silence_below_db;
  std::optional<float> df_off_above_db;
  bool no_erb = false;
  bool no_df = false;
  bool rtf = false;
  std::optional<std::string> meters_csv;
};

inline constexpr const char* kMetersHeader = "frame_index,xi_db,decision,mean_gain,df_delta_db,in_rms_db,out_rms_db";

inline std::string format_meter_row(const MeterFrame& m) {
  char line[160];
  std::snprintf(line, sizeof line, "%lld,%.3f,%s,%.6f,%.3f,%.3f,%.3f", static_cast<long long>(m.frame_index),
                m.xi_db, std::string(to_string(m.decision)).c_str(), m.mean_gain, m.df_delta_db, m.in_rms_db,
                m.out_rms_db);
  return line;
}

inline std::string format_rtf(const RtfReport& r) {
  char line[320];
  std::snprintf(line, sizeof line,
                "rtf=%.4f audio_s=%.3f wall_s=%.4f analysis_s=%.4f estimate_s=%.4f erb_s=%.4f df_s=%.4f "
                "gate_s=%.4f synthesis_s=%.4f",
                r.rtf, r.processed_audio_s, r.wall_time_s, r.stages.analysis_s, r.stages.estimate_s,
                r.stages.erb_s, r.stages.df_s, r.stages.gate_s, r.stages.synthesis_s);
  return line;
}

inline EngineConfig make_config(const CliInvocation& inv) {
  EngineConfig cfg;
  cfg.estimator = inv.estimator;
  if (inv.atten_db) cfg.atten.max_atten_db = *inv.atten_db;
  if (inv.silence_below_db) cfg.thresholds.silence_below_db = *inv.silence_below_db;
  if (inv.df_off_above_db) cfg.thresholds.df_off_above_db = *inv.df_off_above_db;
  cfg.erb_enabled = !inv.no_erb;
  cfg.df_enabled = !inv.no_df;
  return cfg;
}

namespace detail {

inline int reject_format(const wav::Audio& a, const std::string& path, std::ostream& err) {
  if (a.sample_rate != kSampleRate) {
    err << "error: " << path << " is " << a.sample_rate
        << " Hz; input must be 48 kHz (48000 Hz), resampling is not supported\n";
    return kInvalidInvocation;
  }
  if (a.channels != 1) {
    err << "error: " << path << " has " << a.channels << " channels; only mono is supported\n";
    return kInvalidInvocation;
  }
  return kOk;
}

}  // namespace detail

// Offline enhancement of one file. Output has the input's length and sample format.
inline int run(const CliInvocation& inv, std::ostream& out, std::ostream& err) {
  if (inv.estimator == EstimatorKind::oracle && !inv.clean) {
    err << "error: --estimator oracle requires --clean\n";
    return kInvalidInvocation;
  }
  const EngineConfig cfg = make_config(inv);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInvocation;
  }

  wav::Audio input;
  std::optional<wav::Audio> clean;
  try {
    input = wav::read(inv.input);
    if (int rc = detail::reject_format(input, inv.input, err)) return rc;
    if (inv.clean) {
      clean = wav::read(*inv.clean);
      if (int rc = detail::reject_format(*clean, *inv.clean, err)) return rc;
      if (clean->samples.size() != input.samples.size()) {
        err << "error: clean reference length differs from input\n";
        return kInvalidInvocation;
      }
    }
  } catch (const wav::FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInvocation;
  } catch (const wav::IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  }

  Engine engine(cfg, clean.has_value());
  const int hop = engine.hop_len();
  const std::size_t n = input.samples.size();
  const std::size_t hops = (n + hop - 1) / hop + engine.warmup_hops();
  std::vector<float> padded_in(hops * hop, 0.0f), padded_clean;
  std::copy(input.samples.begin(), input.samples.end(), padded_in.begin());
  if (clean) {
    padded_clean.assign(hops * hop, 0.0f);
    std::copy(clean->samples.begin(), clean->samples.end(), padded_clean.begin());
  }

  std::vector<float> enhanced;
  enhanced.reserve(hops * hop);
  std::vector<float> out_hop(hop);
  std::vector<std::string> meter_rows;
  std::size_t bad_hops = 0;
  for (std::size_t h = 0; h < hops; ++h) {
    const std::int64_t frames_before = engine.frames_processed();
    std::span<const float> in(padded_in.data() + h * hop, hop);
    std::span<const float> ref;
    if (clean) ref = std::span<const float>(padded_clean.data() + h * hop, hop);
    try {
      engine.process_hop(in, out_hop, ref);
    } catch (const NumericError&) {
      ++bad_hops;
    }
    if (engine.last_hop_emitted()) enhanced.insert(enhanced.end(), out_hop.begin(), out_hop.end());
    if (inv.meters_csv && engine.frames_processed() != frames_before)
      meter_rows.push_back(format_meter_row(engine.last_meter()));
  }
  if (bad_hops) err << "warning: " << bad_hops << " hop(s) contained non-finite samples and were zeroed\n";
  enhanced.resize(n);

  try {
    wav::Audio result{kSampleRate, 1, input.format, std::move(enhanced)};
    wav::write(inv.output, result);
    if (inv.meters_csv) {
      std::ofstream csv(*inv.meters_csv, std::ios::trunc);
      if (!csv) throw wav::IoError("cannot open " + *inv.meters_csv + " for writing");
      csv << kMetersHeader << "\n";
      for (const auto& row : meter_rows) csv << row << "\n";
      if (!csv) throw wav::IoError("write failed for " + *inv.meters_csv);
    }
  } catch (const wav::IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  }

  if (inv.rtf) out << format_rtf(engine.timing()) << "\n";
  return kOk;
}

}  // namespace dfn::cli
