#pragma once

// HTTP inference service over an immutable model snapshot.
//
//   GET  /health        {"status", "checkpoint_hash", "config_hash", "iteration"}
//   POST /score         image -> {"s_n", "s_b"} clamped to [0,1]
//   POST /restore       image [+ s_n, s_b] -> x4 PNG; X-Score-N / X-Score-B echo the scores used
//   POST /admin/reload  re-read the checkpoint and swap the snapshot
//
// Images arrive as a multipart part named "image" or as the raw request body
// (PNG or PPM). Scores come from multipart fields "s_n"/"s_b", a multipart or
// query field "scores" holding {"s_n":..,"s_b":..}, or query parameters s_n/s_b.

#include "mmsr/http.hpp"
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <future>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mmsr/checkpoint.hpp"
#include "mmsr/image_io.hpp"
#include "mmsr/nets.hpp"

namespace mmsr::service {

struct ServiceConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string checkpoint;
  std::size_t max_edge = 1024;
  double timeout_s = 60.0;
  std::vector<std::string> cors_allow;  // "*" allows any origin
  std::size_t max_body_bytes = 64u << 20;
  std::size_t threads = 16;

  void validate() const {
    if (port < 0 || port > 65535) throw std::invalid_argument("service: port must be in [0, 65535]");
    if (max_edge == 0) throw std::invalid_argument("service: max_edge must be positive");
    if (!(timeout_s > 0)) throw std::invalid_argument("service: timeout must be positive");
    if (threads == 0) throw std::invalid_argument("service: threads must be positive");
  }

  /// MMSR_BIND, MMSR_PORT and MMSR_CHECKPOINT override the fields they name.
  void apply_env() {
    if (const char* v = std::getenv("MMSR_BIND"); v && *v) bind = v;
    if (const char* v = std::getenv("MMSR_PORT"); v && *v) {
      char* end = nullptr;
      const long p = std::strtol(v, &end, 10);
      if (*end != '\0' || p < 0 || p > 65535) throw std::invalid_argument(std::string("MMSR_PORT is not a valid port: ") + v);
      port = static_cast<int>(p);
    }
    if (const char* v = std::getenv("MMSR_CHECKPOINT"); v && *v) checkpoint = v;
  }
};

/// One loaded checkpoint. Never modified after construction.
struct Snapshot {
  Checkpoint ckpt;
  std::string checkpoint_hash;  // digest of the checkpoint file bytes
  std::string config_hash;

  static std::shared_ptr<const Snapshot> from_bytes(const std::string& bytes) {
    auto s = std::make_shared<Snapshot>();
    s->ckpt = deserialize(bytes);
    s->checkpoint_hash = fnv1a_hex(bytes);
    s->config_hash = s->ckpt.hash();
    return s;
  }
  static std::shared_ptr<const Snapshot> from_checkpoint(const Checkpoint& ck) { return from_bytes(serialize(ck)); }
  static std::shared_ptr<const Snapshot> load(const std::string& path) {
    try {
      return from_bytes(read_file_bytes(path));
    } catch (const CheckpointError& e) {
      throw CheckpointError(path + ": " + e.what());
    }
  }
};

/// Error carrying an HTTP status.
struct HttpError : std::runtime_error {
  int status;
  HttpError(int s, const std::string& m) : std::runtime_error(m), status(s) {}
};

inline std::string format_score(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Scores computed by /score and used by /restore when none are supplied.
inline nets::ScorePair estimate_scores(const Snapshot& s, const Image& lr) { return s.ckpt.models.udem.score(lr).clamped(); }

class Service {
 public:
  explicit Service(ServiceConfig cfg, std::ostream* access_log = &std::cerr) : cfg_(std::move(cfg)), log_(access_log) {
    cfg_.validate();
    if (!cfg_.checkpoint.empty()) set_snapshot(Snapshot::load(cfg_.checkpoint));
    install();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;
  ~Service() { stop(); }

  std::shared_ptr<const Snapshot> snapshot() const { return std::atomic_load(&snap_); }
  void set_snapshot(std::shared_ptr<const Snapshot> s) { std::atomic_store(&snap_, std::move(s)); }

  /// Re-reads the configured checkpoint. On failure the current snapshot stays.
  std::shared_ptr<const Snapshot> reload() {
    if (cfg_.checkpoint.empty()) throw CheckpointError("no checkpoint path configured");
    auto s = Snapshot::load(cfg_.checkpoint);
    set_snapshot(s);
    return s;
  }

  /// Binds the socket; returns the bound port.
  int bind() {
    const int port = cfg_.port == 0 ? server_.bind_to_any_port(cfg_.bind) : (server_.bind_to_port(cfg_.bind, cfg_.port) ? cfg_.port : -1);
    if (port < 0) throw std::runtime_error("cannot bind " + cfg_.bind + ":" + std::to_string(cfg_.port));
    port_ = port;
    return port;
  }
  /// Serves until stop(); call bind() first.
  bool serve() { return server_.listen_after_bind(); }
  void stop() {
    if (server_.is_running()) server_.stop();
  }
  void wait_until_ready() const { server_.wait_until_ready(); }
  int port() const noexcept { return port_; }
  const ServiceConfig& config() const noexcept { return cfg_; }

  // Request handling without the HTTP layer; also used by tests.
  nlohmann::json health() const {
    auto s = snapshot();
    if (!s) throw HttpError(503, "model not loaded");
    return {{"status", "ok"}, {"checkpoint_hash", s->checkpoint_hash}, {"config_hash", s->config_hash}, {"iteration", s->ckpt.iteration}};
  }

  Image decode_payload(std::string_view bytes) const {
    if (bytes.empty()) throw HttpError(400, "missing image payload");
    std::pair<std::size_t, std::size_t> dims;
    try {
      dims = image_dimensions(bytes);
    } catch (const ImageDecodeError& e) {
      throw HttpError(400, e.what());
    }
    if (dims.first > cfg_.max_edge || dims.second > cfg_.max_edge)
      throw HttpError(413, "image " + std::to_string(dims.first) + "x" + std::to_string(dims.second) + " exceeds max edge " + std::to_string(cfg_.max_edge));
    try {
      Image img = decode_image(bytes);
      if (height(img) < 3 || width(img) < 3) throw HttpError(400, "image must be at least 3x3");
      return img;
    } catch (const ImageDecodeError& e) {
      throw HttpError(400, e.what());
    }
  }

 private:
  using Clock = std::chrono::steady_clock;

  static std::string_view image_bytes(const httplib::Request& req) {
    if (req.is_multipart_form_data()) {
      auto it = req.files.find("image");
      if (it == req.files.end()) throw HttpError(400, "multipart request lacks an 'image' part");
      return it->second.content;
    }
    return req.body;
  }

  static std::optional<std::string> field(const httplib::Request& req, const std::string& key) {
    if (req.is_multipart_form_data()) {
      auto it = req.files.find(key);
      if (it != req.files.end()) return it->second.content;
    }
    if (req.has_param(key)) return req.get_param_value(key);
    return std::nullopt;
  }

  static double parse_score(const std::string& text, const char* name) {
    const char* b = text.c_str();
    char* end = nullptr;
    const double v = std::strtod(b, &end);
    if (end == b) throw HttpError(400, std::string(name) + " is not a number");
    while (*end == ' ' || *end == '\n' || *end == '\r' || *end == '\t') ++end;
    if (*end != '\0') throw HttpError(400, std::string(name) + " is not a number");
    return v;
  }

  static std::optional<nets::ScorePair> requested_scores(const httplib::Request& req) {
    std::optional<nets::ScorePair> out;
    if (auto js = field(req, "scores")) {
      nlohmann::json j = nlohmann::json::parse(*js, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw HttpError(400, "scores must be a JSON object");
      auto get = [&](const char* k) {
        if (!j.contains(k)) throw HttpError(400, std::string("scores lacks ") + k);
        const auto& v = j[k];
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) return parse_score(v.get<std::string>(), k);
        if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
        throw HttpError(400, std::string(k) + " must be a number");
      };
      out = nets::ScorePair{get("s_n"), get("s_b")};
    }
    auto sn = field(req, "s_n"), sb = field(req, "s_b");
    if (sn || sb) {
      if (!sn || !sb) throw HttpError(400, "both s_n and s_b must be given");
      out = nets::ScorePair{parse_score(*sn, "s_n"), parse_score(*sb, "s_b")};
    }
    if (out && !out->finite()) throw HttpError(422, "scores must be finite");
    return out;
  }

  /// Runs `fn` on a worker thread and gives up after the configured timeout.
  /// The worker keeps its own reference to the snapshot and finishes in the background.
  template <class F>
  auto with_timeout(F fn) const -> decltype(fn()) {
    using R = decltype(fn());
    auto task = std::make_shared<std::packaged_task<R()>>(std::move(fn));
    auto fut = task->get_future();
    std::thread([task] { (*task)(); }).detach();
    if (fut.wait_for(std::chrono::duration<double>(cfg_.timeout_s)) != std::future_status::ready) throw HttpError(504, "request timed out");
    return fut.get();
  }

  std::shared_ptr<const Snapshot> require_model() const {
    auto s = snapshot();
    if (!s) throw HttpError(503, "model not loaded");
    return s;
  }

  void handle_score(const httplib::Request& req, httplib::Response& res) const {
    auto s = require_model();
    Image lr = decode_payload(image_bytes(req));
    const auto sc = with_timeout([s, lr = std::move(lr)] { return estimate_scores(*s, lr); });
    res.set_content(nlohmann::json{{"s_n", sc.s_n}, {"s_b", sc.s_b}}.dump(), "application/json");
  }

  void handle_restore(const httplib::Request& req, httplib::Response& res) const {
    auto s = require_model();
    const auto requested = requested_scores(req);
    Image lr = decode_payload(image_bytes(req));
    struct Out {
      std::string png;
      nets::ScorePair used;
    };
    auto out = with_timeout([s, lr = std::move(lr), requested] {
      const auto used = requested ? *requested : estimate_scores(*s, lr);
      return Out{encode_png(s->ckpt.models.restore(lr, used)), used};
    });
    res.set_header("X-Score-N", format_score(out.used.s_n));
    res.set_header("X-Score-B", format_score(out.used.s_b));
    res.set_content(std::move(out.png), "image/png");
  }

  void cors(const httplib::Request& req, httplib::Response& res) const {
    if (!req.has_header("Origin")) return;
    const auto origin = req.get_header_value("Origin");
    for (const auto& a : cfg_.cors_allow)
      if (a == "*" || a == origin) {
        res.set_header("Access-Control-Allow-Origin", a == "*" ? "*" : origin);
        res.set_header("Access-Control-Expose-Headers", "X-Score-N, X-Score-B");
        res.set_header("Vary", "Origin");
        return;
      }
  }

  static void error_body(httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", msg}, {"status", status}}.dump(), "application/json");
  }

  template <class H>
  httplib::Server::Handler wrap(H h) {
    return [this, h](const httplib::Request& req, httplib::Response& res) {
      try {
        (this->*h)(req, res);
      } catch (const HttpError& e) {
        error_body(res, e.status, e.what());
      } catch (const std::invalid_argument& e) {
        error_body(res, 400, e.what());
      } catch (const std::exception& e) {
        error_body(res, 500, e.what());
      }
    };
  }

  void handle_health(const httplib::Request&, httplib::Response& res) const { res.set_content(health().dump(), "application/json"); }

  void handle_reload(const httplib::Request&, httplib::Response& res) {
    try {
      reload();
    } catch (const CheckpointError& e) {
      throw HttpError(500, std::string("reload failed: ") + e.what());
    }
    res.set_content(health().dump(), "application/json");
  }

  void install() {
    server_.new_task_queue = [n = cfg_.threads] { return new httplib::ThreadPool(n); };
    server_.set_payload_max_length(cfg_.max_body_bytes);
    server_.set_pre_routing_handler([](const httplib::Request&, httplib::Response&) {
      request_start() = Clock::now();
      return httplib::Server::HandlerResponse::Unhandled;
    });
    server_.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) { cors(req, res); });
    server_.Get("/health", wrap(&Service::handle_health));
    server_.Post("/score", wrap(&Service::handle_score));
    server_.Post("/restore", wrap(&Service::handle_restore));
    server_.Post("/admin/reload", wrap(&Service::handle_reload));
    server_.Options(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
      cors(req, res);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) error_body(res, res.status, httplib::status_message(res.status));
    });
    server_.set_logger([this](const httplib::Request& req, const httplib::Response& res) { access(req, res); });
  }

  static Clock::time_point& request_start() {
    thread_local Clock::time_point t = Clock::now();
    return t;
  }

  void access(const httplib::Request& req, const httplib::Response& res) const {
    if (!log_) return;
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - request_start()).count();
    nlohmann::json j{{"ts", static_cast<std::int64_t>(std::time(nullptr))},
                     {"method", req.method},
                     {"path", req.path},
                     {"status", res.status},
                     {"ms", ms},
                     {"bytes_in", req.body.size()},
                     {"bytes_out", res.body.size()},
                     {"remote", req.remote_addr}};
    std::lock_guard lock(log_mu_);
    *log_ << j.dump() << '\n' << std::flush;
  }

  ServiceConfig cfg_;
  std::ostream* log_;
  mutable std::mutex log_mu_;
  std::shared_ptr<const Snapshot> snap_;
  httplib::Server server_;
  int port_ = -1;
};

namespace detail {
inline std::atomic<bool> g_hup{false};
inline void on_hup(int) { g_hup.store(true); }
}  // namespace detail

/// Installs a SIGHUP handler and polls it from a background thread, reloading
/// `svc` on each signal. The returned thread stops when `stop` becomes true.
inline std::thread watch_sighup(Service& svc, std::atomic<bool>& stop, std::ostream& log = std::cerr) {
  std::signal(SIGHUP, detail::on_hup);
  return std::thread([&svc, &stop, &log] {
    while (!stop.load()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      if (detail::g_hup.exchange(false)) {
        try {
          auto s = svc.reload();
          log << nlohmann::json{{"event", "reload"}, {"checkpoint_hash", s->checkpoint_hash}}.dump() << '\n';
        } catch (const std::exception& e) {
          log << nlohmann::json{{"event", "reload_failed"}, {"error", e.what()}}.dump() << '\n';
        }
      }
    }
  });
}

}  // namespace mmsr::service
