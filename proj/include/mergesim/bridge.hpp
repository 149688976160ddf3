#pragma once

// Live link between a running engine and cockpit clients over WebSocket.
// The engine thread publishes snapshots into a SnapshotChannel and drains
// pedal commands from an InputQueue; the server thread owns every socket and
// never touches the engine.

#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "mergesim/cli.hpp"
#include "mergesim/control.hpp"
#include "mergesim/engine.hpp"
#include "mergesim/errors.hpp"
#include "mergesim/geometry.hpp"
#include "mergesim/trajectory_io.hpp"
#include "mergesim/v2x.hpp"

namespace mergesim::bridge {

using nlohmann::json;

struct PedalMessage {
  double throttle{};
  double brake{};
  double ts{};  // client clock, seconds
};

/// Validates a {type:"pedals"} message. Values outside [0, 1] raise OutOfRange.
inline PedalMessage parse_pedals(const json& msg) {
  auto field = [&](const char* k) {
    const auto it = msg.find(k);
    if (it == msg.end() || !it->is_number()) throw ParseError(std::string("pedals.") + k + " must be a number");
    return it->get<double>();
  };
  PedalMessage p{field("throttle"), field("brake"), field("ts")};
  auto unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (!unit(p.throttle)) throw OutOfRange("throttle " + std::to_string(p.throttle) + " outside [0, 1]");
  if (!unit(p.brake)) throw OutOfRange("brake " + std::to_string(p.brake) + " outside [0, 1]");
  if (!std::isfinite(p.ts)) throw ParseError("pedals.ts must be finite");
  return p;
}

/// Pedals superpose: full throttle and full brake together give a_drive - b_brake.
inline double apply_pedals(const PedalMessage& p, const HumanParams& h) {
  return p.throttle * h.a_drive_max - p.brake * h.b_brake_max;
}

/// Running figures shown alongside each frame.
struct FrameStats {
  double min_ttc{kInf};
  int fallback_engagements{0};
  int decel_events{0};
  bool merged{false};

  void absorb(const Snapshot& s) {
    for (const auto& [id, ttc] : s.ttc) min_ttc = std::min(min_ttc, ttc);
    for (const auto& e : s.events) {
      if (e.kind == "fallback_engaged") ++fallback_engagements;
      if (e.kind == "decel") ++decel_events;
      if (e.kind == "merge") merged = true;
    }
  }
};

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json encode_frame(const Snapshot& s, const RoadNetwork& net, const V2xParams& v2x,
                         const FrameStats& stats) {
  json vehicles = json::array();
  for (const auto& v : s.vehicles) {
    const Point p = point_at_station(net.get(v.path_id), Station{v.station});
    const auto seq = s.sequence.find(v.id);
    const auto ttc = s.ttc.find(v.id);
    vehicles.push_back({{"id", v.id},
                        {"path_id", v.path_id},
                        {"x", p.x},
                        {"y", p.y},
                        {"station", v.station},
                        {"speed", v.speed},
                        {"accel", v.accel},
                        {"mode", std::string(to_string(v.mode))},
                        {"class", std::string(to_string(v.cls))},
                        {"seq", seq == s.sequence.end() ? json(nullptr) : json(seq->second)},
                        {"ttc", ttc == s.ttc.end() ? json(nullptr) : finite_or_null(ttc->second)}});
  }
  json events = json::array();
  for (const auto& e : s.events) events.push_back(to_json(e));
  return {{"type", "frame"},
          {"t", round_time(s.t)},
          {"step", s.step},
          {"vehicles", vehicles},
          {"events", events},
          {"infra",
           {{"position", {v2x.infra_position.x, v2x.infra_position.y}},
            {"range", v2x.range},
            {"registered", s.registered}}},
          {"metrics",
           {{"elapsed", round_time(s.t)},
            {"min_ttc", finite_or_null(stats.min_ttc)},
            {"fallback_engagements", stats.fallback_engagements},
            {"decel_events", stats.decel_events},
            {"merged", stats.merged}}}};
}

/// Engine-to-bridge hand-off. Keeps only the newest snapshot but accumulates
/// events so a consumer sampling slower than the engine loses none of them.
class SnapshotChannel {
 public:
  void publish(const Snapshot& s) {
    std::lock_guard lock(mu_);
    pending_events_.insert(pending_events_.end(), s.events.begin(), s.events.end());
    latest_ = s;
    latest_->events.clear();
    if (s.finished) finished_ = true;
  }

  /// The newest snapshot if it is later than the last one taken, carrying
  /// every event published since then.
  std::optional<Snapshot> take() {
    std::lock_guard lock(mu_);
    if (!latest_ || latest_->t <= last_t_) return std::nullopt;
    Snapshot out = *latest_;
    out.events = std::move(pending_events_);
    pending_events_.clear();
    last_t_ = out.t;
    return out;
  }

  bool finished() const {
    std::lock_guard lock(mu_);
    return finished_;
  }

 private:
  mutable std::mutex mu_;
  std::optional<Snapshot> latest_{};
  std::vector<Event> pending_events_{};
  double last_t_{-kInf};
  bool finished_{false};
};

/// Bridge-to-engine pedal commands. The engine drains it once per control
/// tick and keeps the last command when nothing new arrived.
class InputQueue {
 public:
  void push(double accel) {
    std::lock_guard lock(mu_);
    cmd_ = accel;
  }
  std::optional<double> drain() {
    std::lock_guard lock(mu_);
    return std::exchange(cmd_, std::nullopt);
  }

 private:
  std::mutex mu_;
  std::optional<double> cmd_{};
};

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

struct BridgeConfig {
  unsigned short port{8700};
  std::string address{"0.0.0.0"};
  HumanParams pedals{};
  V2xParams v2x{};
  double frame_period{0.05};  // 20 Hz
  std::size_t max_queued_frames{8};
};

class BridgeServer;

class Session : public std::enable_shared_from_this<Session> {
 public:
  enum class Role { none, driver, spectator };

  Session(tcp::socket socket, BridgeServer& server) : ws_(std::move(socket)), server_(server) {}

  void start();
  void send(std::shared_ptr<const std::string> text, bool droppable);
  void close_when_drained();
  Role role() const { return role_; }

 private:
  friend class BridgeServer;
  void read();
  void on_read(beast::error_code ec);
  void write();
  void finish();

  websocket::stream<beast::tcp_stream> ws_;
  BridgeServer& server_;
  beast::flat_buffer buffer_;
  std::deque<std::pair<std::shared_ptr<const std::string>, bool>> queue_;
  Role role_{Role::none};
  bool open_{false};
  bool closing_{false};
  double last_pedal_ts_{-kInf};
};

/// WebSocket endpoint on a dedicated io thread. Frames go to every connected
/// session; only the single driver session may send pedals.
class BridgeServer {
 public:
  BridgeServer(BridgeConfig cfg, SnapshotChannel& channel, InputQueue& input, const RoadNetwork& net)
      : cfg_(std::move(cfg)), channel_(channel), input_(input), net_(net), acceptor_(io_),
        timer_(io_), signals_(io_) {}

  ~BridgeServer() { stop(); }

  /// Binds and starts serving. Throws IoError when the port is unavailable.
  void start() {
    beast::error_code ec;
    const tcp::endpoint ep(asio::ip::make_address(cfg_.address, ec), cfg_.port);
    if (ec) throw IoError("bad bind address " + cfg_.address);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw IoError("cannot listen on port " + std::to_string(cfg_.port) + ": " + ec.message());
    port_ = acceptor_.local_endpoint().port();
    accept();
    schedule_frame();
    thread_ = std::thread([this] { io_.run(); });
  }

  unsigned short port() const { return port_; }

  /// Calls `fn` on SIGINT/SIGTERM (from the io thread).
  void on_interrupt(std::function<void()> fn) {
    asio::post(io_, [this, fn = std::move(fn)] {
      signals_.add(SIGINT);
      signals_.add(SIGTERM);
      signals_.async_wait([fn](beast::error_code ec, int) {
        if (!ec) fn();
      });
    });
  }

  /// Sends whatever the channel still holds plus an end notice, closes every
  /// session and joins the io thread.
  void stop(bool partial = false) {
    if (!thread_.joinable()) return;
    asio::post(io_, [this, partial] {
      stopping_ = true;
      pump();
      broadcast(json{{"type", "end"}, {"partial", partial}}.dump(), false);
      beast::error_code ec;
      acceptor_.close(ec);
      timer_.cancel();
      signals_.cancel(ec);
      for (const auto& s : sessions_) s->close_when_drained();
      // Clients that never answer the close handshake must not hold us up.
      auto deadline = std::make_shared<asio::steady_timer>(io_, std::chrono::seconds(2));
      deadline->async_wait([this, deadline](beast::error_code) { io_.stop(); });
      deadline_ = deadline;
      if (sessions_.empty()) deadline->cancel();
    });
    thread_.join();
  }

  // io-thread only -----------------------------------------------------------

  void remove(const std::shared_ptr<Session>& s) {
    if (driver_ == s.get()) driver_ = nullptr;
    sessions_.erase(s);
    if (stopping_ && sessions_.empty() && deadline_) deadline_->cancel();
  }

  json hello(Session& s, const json& msg) {
    const std::string want = msg.value("role", "spectator");
    json reply = {{"type", "hello"},
                  {"network", network_to_json(net_)},
                  {"infra",
                   {{"position", {cfg_.v2x.infra_position.x, cfg_.v2x.infra_position.y}},
                    {"range", cfg_.v2x.range}}}};
    if (want == "driver") {
      if (driver_ == nullptr || driver_ == &s) {
        driver_ = &s;
        s.role_ = Session::Role::driver;
        reply["role"] = "driver";
        reply["accepted"] = true;
      } else {
        if (s.role_ == Session::Role::none) s.role_ = Session::Role::spectator;
        reply["role"] = s.role_ == Session::Role::driver ? "driver" : "spectator";
        reply["accepted"] = false;
        reply["reason"] = "driver seat taken";
      }
    } else if (want == "spectator") {
      if (driver_ == &s) driver_ = nullptr;
      s.role_ = Session::Role::spectator;
      reply["role"] = "spectator";
      reply["accepted"] = true;
    } else {
      return {{"type", "error"}, {"reason", "unknown role '" + want + "'"}};
    }
    return reply;
  }

  std::optional<json> pedals(Session& s, const json& msg) {
    if (driver_ != &s) return json{{"type", "error"}, {"reason", "only the driver may send pedals"}};
    PedalMessage p;
    try {
      p = parse_pedals(msg);
    } catch (const Error& e) {
      return json{{"type", "error"}, {"reason", e.what()}};
    }
    if (p.ts < s.last_pedal_ts_) return std::nullopt;  // stale, ignored silently
    s.last_pedal_ts_ = p.ts;
    input_.push(apply_pedals(p, cfg_.pedals));
    return std::nullopt;
  }

 private:
  void accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto s = std::make_shared<Session>(std::move(socket), *this);
      sessions_.insert(s);
      s->start();
      accept();
    });
  }

  void schedule_frame() {
    timer_.expires_after(std::chrono::duration_cast<asio::steady_timer::duration>(
        std::chrono::duration<double>(cfg_.frame_period)));
    timer_.async_wait([this](beast::error_code ec) {
      if (ec) return;
      pump();
      schedule_frame();
    });
  }

  void pump() {
    if (auto snap = channel_.take()) {
      stats_.absorb(*snap);
      broadcast(encode_frame(*snap, net_, cfg_.v2x, stats_).dump(), true);
    }
  }

  void broadcast(std::string text, bool droppable) {
    auto shared = std::make_shared<const std::string>(std::move(text));
    for (const auto& s : sessions_) s->send(shared, droppable);
  }

  friend class Session;

  BridgeConfig cfg_;
  SnapshotChannel& channel_;
  InputQueue& input_;
  const RoadNetwork& net_;
  asio::io_context io_;
  tcp::acceptor acceptor_;
  asio::steady_timer timer_;
  asio::signal_set signals_;
  std::shared_ptr<asio::steady_timer> deadline_{};
  std::set<std::shared_ptr<Session>> sessions_;
  Session* driver_{nullptr};
  FrameStats stats_{};
  std::thread thread_;
  unsigned short port_{0};
  bool stopping_{false};
};

inline void Session::start() {
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
    if (ec) return self->finish();
    self->open_ = true;
    self->ws_.text(true);
    self->read();
    if (!self->queue_.empty()) self->write();
  });
}

inline void Session::read() {
  ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
    self->on_read(ec);
  });
}

inline void Session::on_read(beast::error_code ec) {
  if (ec) return finish();
  const std::string text = beast::buffers_to_string(buffer_.data());
  buffer_.consume(buffer_.size());
  std::optional<json> reply;
  const json msg = json::parse(text, nullptr, false);
  if (msg.is_discarded() || !msg.is_object()) {
    reply = json{{"type", "error"}, {"reason", "message is not a JSON object"}};
  } else {
    const std::string type = msg.value("type", "");
    if (type == "hello") {
      reply = server_.hello(*this, msg);
    } else if (type == "pedals") {
      reply = server_.pedals(*this, msg);
    } else {
      reply = json{{"type", "error"}, {"reason", "unknown message type '" + type + "'"}};
    }
  }
  if (reply) send(std::make_shared<const std::string>(reply->dump()), false);
  read();
}

inline void Session::send(std::shared_ptr<const std::string> text, bool droppable) {
  if (closing_) return;
  if (droppable) {
    std::size_t frames = 0;
    for (const auto& q : queue_) frames += q.second ? 1 : 0;
    if (frames >= server_.cfg_.max_queued_frames) return;  // drop, never reorder
  }
  queue_.emplace_back(std::move(text), droppable);
  if (open_ && queue_.size() == 1) write();
}

inline void Session::write() {
  ws_.async_write(asio::buffer(*queue_.front().first),
                  [self = shared_from_this()](beast::error_code ec, std::size_t) {
                    if (ec) return self->finish();
                    self->queue_.pop_front();
                    if (!self->queue_.empty()) {
                      self->write();
                    } else if (self->closing_) {
                      self->close_when_drained();
                    }
                  });
}

inline void Session::close_when_drained() {
  closing_ = true;
  if (!open_) return finish();
  if (!queue_.empty()) return;
  open_ = false;
  ws_.async_close(websocket::close_code::normal,
                  [self = shared_from_this()](beast::error_code) { self->finish(); });
}

inline void Session::finish() {
  open_ = false;
  server_.remove(shared_from_this());
}

struct ServeOptions {
  cli::RunOptions run{};
  unsigned short port{8700};
  bool realtime{false};
  double speed{1.0};  // wall-clock pacing factor when realtime
  bool handle_signals{true};
};

/// Runs one scenario while serving the bridge. Returns a cli exit code.
/// `on_ready` receives the bound port; setting `*stop` asks the run to end
/// early, the same as an interrupt.
inline int cmd_serve(const ServeOptions& o, std::ostream& out, std::ostream& err,
                     const std::function<void(unsigned short)>& on_ready = {},
                     const std::atomic<bool>* stop = nullptr) {
  Scenario sc;
  try {
    if (o.run.mode && !run_mode_from_string(*o.run.mode))
      throw ValidationError("mode", "unknown mode '" + *o.run.mode + "'");
    const auto seeds = cli::parse_seeds(o.run.seeds);
    if (seeds.size() != 1) throw ValidationError("seed", "serve takes a single seed");
    sc = cli::resolve_scenario(o.run, seeds.front());
    if (sc.mode == RunMode::human && !o.realtime)
      throw ValidationError("mode", "human mode requires --realtime");
    if (!(o.speed > 0.0)) throw ValidationError("speed", "must be positive");
  } catch (const ValidationError& e) {
    err << "invalid scenario: " << e.what() << "\n";
    return cli::kValidation;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return cli::kValidation;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return cli::kIo;
  }

  Engine engine(sc);
  SnapshotChannel channel;
  InputQueue input;
  engine.set_input_source([&input] { return input.drain(); });
  engine.set_snapshot_sink([&channel](const Snapshot& s) { channel.publish(s); });

  BridgeConfig bc;
  bc.port = o.port;
  bc.pedals = sc.driver.human;
  bc.v2x = sc.v2x;
  BridgeServer server(bc, channel, input, engine.network());
  try {
    server.start();
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return cli::kIo;
  }
  if (o.handle_signals) server.on_interrupt([&engine] { engine.request_stop(); });
  out << "serving on port " << server.port() << "\n" << std::flush;
  if (on_ready) on_ready(server.port());

  cli::RunSummary summary{"complete"};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    while (true) {
      if (stop && stop->load()) engine.request_stop();
      if (!engine.step()) break;
      if (o.realtime) {
        const double wall = engine.time() / o.speed;
        std::this_thread::sleep_until(t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                               std::chrono::duration<double>(wall)));
      }
    }
  } catch (const SafetyViolation& e) {
    summary.status = "safety_violation";
    summary.message = e.what();
  } catch (const ControllerPanic& e) {
    summary.status = "controller_panic";
    summary.message = e.what();
  }
  server.stop(summary.status != "complete" || engine.partial());

  try {
    const auto dir = o.run.out.value_or(cli::default_out_dir());
    summary = cli::write_artifacts(engine, dir, summary);
    out << "run " << summary.status << " at t=" << summary.end_time << " -> " << dir.string() << "\n";
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return cli::kIo;
  }
  if (!summary.message.empty()) err << summary.message << "\n";
  return summary.status == "safety_violation" || summary.status == "controller_panic" ? cli::kSafety
                                                                                      : cli::kOk;
}

}  // namespace mergesim::bridge
