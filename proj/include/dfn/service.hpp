#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "dfn/control.hpp"
#include "dfn/engine.hpp"
#include "dfn/wav.hpp"

namespace dfn::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

// Anything that can deliver hops in real time. Live capture would implement
// this with a device callback; the file loop is the default.
class HopSource {
 public:
  virtual ~HopSource() = default;
  virtual bool has_clean() const = 0;
  virtual std::string describe() const = 0;
  // Fills one hop of noisy (and clean, when available) samples.
  virtual void next(std::span<float> noisy, std::span<float> clean) = 0;
};

// Loops a mono 48 kHz file forever, optionally with an aligned clean reference.
class FileLoopSource final : public HopSource {
 public:
  FileLoopSource(std::vector<float> noisy, std::vector<float> clean = {}, std::string name = "memory")
      : noisy_(std::move(noisy)), clean_(std::move(clean)), name_(std::move(name)) {
    if (noisy_.empty()) throw std::invalid_argument("loop source: empty signal");
    if (!clean_.empty() && clean_.size() != noisy_.size())
      throw std::invalid_argument("loop source: clean reference length differs");
  }

  static FileLoopSource from_files(const std::string& noisy_path, const std::string& clean_path = {}) {
    auto load = [](const std::string& p) {
      wav::Audio a = wav::read(p);
      if (a.sample_rate != kSampleRate || a.channels != 1)
        throw wav::FormatError(p + ": loop file must be mono 48000 Hz");
      return std::move(a.samples);
    };
    return FileLoopSource(load(noisy_path), clean_path.empty() ? std::vector<float>{} : load(clean_path),
                          noisy_path);
  }

  bool has_clean() const override { return !clean_.empty(); }
  std::string describe() const override { return "file-loop:" + name_; }

  void next(std::span<float> noisy, std::span<float> clean) override {
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      noisy[i] = noisy_[pos_];
      if (!clean.empty()) clean[i] = clean_.empty() ? 0.0f : clean_[pos_];
      pos_ = (pos_ + 1) % noisy_.size();
    }
  }

 private:
  std::vector<float> noisy_, clean_;
  std::string name_;
  std::size_t pos_ = 0;
};

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 0;  // 0 picks an ephemeral port
  // Pace the audio actor at one hop per 10 ms; off runs as fast as possible.
  bool realtime = true;
  std::chrono::milliseconds pump_interval{5};
  std::size_t max_queued_meters = 64;
};

// WebSocket control endpoint (/control) plus GET /healthz. All network
// state lives on one io_context thread; the audio actor runs on its own thread
// and only talks to the network side through the engine's config channel and
// meter ring.
class ControlServer {
 public:
  ControlServer(Engine& engine, std::unique_ptr<HopSource> source, ServerOptions opts = {})
      : engine_(engine), source_(std::move(source)), opts_(std::move(opts)), controller_(engine),
        acceptor_(io_), pump_(io_) {
    if (!source_) throw std::invalid_argument("server: no audio source");
    if (source_->has_clean() != engine_.has_clean_reference())
      throw std::invalid_argument("server: engine clean-reference setting must match the source");
  }

  ~ControlServer() { stop(); }

  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  void start() {
    tcp::endpoint ep(asio::ip::make_address(opts_.address), opts_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(asio::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    schedule_pump();
    running_ = true;
    audio_thread_ = std::thread([this] { audio_loop(); });
    io_thread_ = std::thread([this] { io_.run(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (audio_thread_.joinable()) audio_thread_.join();
    asio::post(io_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      pump_.cancel();
      for (auto& s : sessions_) s->close();
      sessions_.clear();
      io_.stop();
    });
    if (io_thread_.joinable()) io_thread_.join();
  }

  unsigned short port() const { return port_; }
  std::uint64_t hops_processed() const { return hops_.load(); }
  asio::io_context& io_context() { return io_; }

 private:
  class WsSession;

  void audio_loop() {
    const int hop = engine_.hop_len();
    std::vector<float> noisy(hop), clean(source_->has_clean() ? hop : 0), out(hop);
    auto deadline = std::chrono::steady_clock::now();
    const auto period = std::chrono::microseconds(1'000'000LL * hop / kSampleRate);
    while (running_) {
      source_->next(noisy, clean);
      try {
        engine_.process_hop(noisy, out, clean);
      } catch (const NumericError&) {
        // hop was zeroed; keep streaming
      }
      hops_.fetch_add(1);
      if (opts_.realtime) {
        deadline += period;
        std::this_thread::sleep_until(deadline);
      }
    }
  }

  void do_accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpSession>(*this, std::move(socket))->run();
      do_accept();
    });
  }

  void schedule_pump() {
    pump_.expires_after(opts_.pump_interval);
    pump_.async_wait([this](beast::error_code ec) {
      if (ec) return;
      pump_meters();
      schedule_pump();
    });
  }

  // Drains the meter ring and sends the newest meter to each subscriber at its rate.
  void pump_meters() {
    while (auto m = engine_.meters().pop()) latest_meter_ = *m;
    if (!latest_meter_) return;
    const auto now = std::chrono::steady_clock::now();
    std::optional<std::string> text;
    for (auto& s : sessions_) {
      if (s->client.meter_hz <= 0.0) continue;
      if (now < s->next_meter) continue;
      const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(1.0 / s->client.meter_hz));
      s->next_meter += period;
      if (s->next_meter < now) s->next_meter = now + period;
      if (!text) text = control::meter_event(*latest_meter_).dump();
      s->send(*text, /*droppable=*/true);
    }
  }

  std::string health() const {
    control::json j{{"status", running_ ? "running" : "stopped"},
                    {"version", control::kProtocolVersion},
                    {"source", source_->describe()},
                    {"hops_processed", hops_.load()},
                    {"clients", sessions_.size()},
                    {"config", control::config_to_json(engine_.snapshot_config())}};
    return j.dump();
  }

  class HttpSession : public std::enable_shared_from_this<HttpSession> {
   public:
    HttpSession(ControlServer& server, tcp::socket socket) : server_(server), stream_(std::move(socket)) {}

    void run() {
      http::async_read(stream_, buffer_, req_,
                       [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

   private:
    void on_read(beast::error_code ec) {
      if (ec) return;
      if (websocket::is_upgrade(req_)) {
        if (req_.target() == "/control") {
          auto ws = std::make_shared<WsSession>(server_, stream_.release_socket());
          ws->accept(std::move(req_));
          return;
        }
      }
      auto res = std::make_shared<http::response<http::string_body>>();
      res->version(req_.version());
      res->keep_alive(false);
      if (req_.method() == http::verb::get && req_.target() == "/healthz") {
        res->result(http::status::ok);
        res->set(http::field::content_type, "application/json");
        res->body() = server_.health();
      } else {
        res->result(http::status::not_found);
        res->set(http::field::content_type, "text/plain");
        res->body() = "not found\n";
      }
      res->prepare_payload();
      http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      });
    }

    ControlServer& server_;
    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
  };

  class WsSession : public std::enable_shared_from_this<WsSession> {
   public:
    WsSession(ControlServer& server, tcp::socket socket) : server_(server), ws_(std::move(socket)) {}

    control::ClientState client;
    std::chrono::steady_clock::time_point next_meter{};

    void accept(http::request<http::string_body> req) {
      ws_.text(true);
      ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->server_.sessions_.insert(self);
        self->do_read();
      });
    }

    void send(std::string text, bool droppable = false) {
      if (closed_) return;
      if (droppable && queue_.size() >= server_.opts_.max_queued_meters) return;
      queue_.push_back(std::move(text));
      if (queue_.size() == 1) do_write();
    }

    void close() {
      closed_ = true;
      beast::error_code ec;
      beast::get_lowest_layer(ws_).socket().close(ec);
    }

   private:
    void do_read() {
      ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->drop();
          return;
        }
        const std::string text = beast::buffers_to_string(self->buffer_.data());
        self->buffer_.consume(self->buffer_.size());
        self->on_message(text);
        self->do_read();
      });
    }

    // A frame may carry several newline-delimited messages.
    void on_message(const std::string& text) {
      std::size_t start = 0;
      while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(start, end - start);
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
          const double before = client.meter_hz;
          const control::json reply = server_.controller_.handle(line, client);
          if (client.meter_hz > 0.0 && before <= 0.0) next_meter = std::chrono::steady_clock::now();
          send(reply.dump());
        }
        start = end + 1;
      }
    }

    void do_write() {
      ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->drop();
          return;
        }
        self->queue_.pop_front();
        if (!self->queue_.empty()) self->do_write();
      });
    }

    void drop() {
      closed_ = true;
      server_.sessions_.erase(shared_from_this());
    }

    ControlServer& server_;
    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    std::deque<std::string> queue_;
    bool closed_ = false;
  };

  Engine& engine_;
  std::unique_ptr<HopSource> source_;
  ServerOptions opts_;
  control::Controller controller_;

  asio::io_context io_;
  tcp::acceptor acceptor_;
  asio::steady_timer pump_;
  std::set<std::shared_ptr<WsSession>> sessions_;
  std::optional<MeterFrame> latest_meter_;

  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> hops_{0};
  unsigned short port_ = 0;
  std::thread audio_thread_;
  std::thread io_thread_;
};

}  // namespace dfn::service
