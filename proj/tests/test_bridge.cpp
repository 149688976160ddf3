#include <gtest/gtest.h>

#include <atomic>
#include <future>
#include <sstream>
#include <thread>

#include "mergesim/bridge.hpp"

using namespace mergesim;
using namespace mergesim::bridge;
namespace fs = std::filesystem;

namespace {

class Client {
 public:
  explicit Client(unsigned short port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/");
  }

  void send(const json& msg) { ws_.write(asio::buffer(msg.dump())); }

  std::optional<json> read() {
    beast::flat_buffer buf;
    beast::error_code ec;
    ws_.read(buf, ec);
    if (ec) return std::nullopt;
    return json::parse(beast::buffers_to_string(buf.data()));
  }

  /// Reads until a message of the given type; frames seen on the way are kept.
  std::optional<json> read_type(const std::string& type) {
    while (auto m = read()) {
      if ((*m)["type"] == "frame") frames.push_back(*m);
      if ((*m)["type"] == type) return m;
    }
    return std::nullopt;
  }

  std::vector<json> frames;

 private:
  asio::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mergesim_bridge_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Pedals, Mapping) {
  const HumanParams h;
  EXPECT_DOUBLE_EQ(apply_pedals({1.0, 0.0, 0.0}, h), 2.5);
  EXPECT_DOUBLE_EQ(apply_pedals({0.0, 1.0, 0.0}, h), -4.0);
  EXPECT_DOUBLE_EQ(apply_pedals({0.4, 0.25, 0.0}, h), 0.0);
}

TEST(Pedals, Validation) {
  EXPECT_NO_THROW(parse_pedals({{"throttle", 0.5}, {"brake", 0.0}, {"ts", 3.0}}));
  EXPECT_THROW(parse_pedals({{"throttle", 1.5}, {"brake", 0.0}, {"ts", 3.0}}), OutOfRange);
  EXPECT_THROW(parse_pedals({{"throttle", 0.5}, {"brake", -0.1}, {"ts", 3.0}}), OutOfRange);
  EXPECT_THROW(parse_pedals({{"throttle", 0.5}, {"ts", 3.0}}), ParseError);
  EXPECT_THROW(parse_pedals({{"throttle", "full"}, {"brake", 0.0}, {"ts", 3.0}}), ParseError);
}

TEST(Frames, EncodeSnapshot) {
  Engine e(load_scenario(json::object()));
  std::optional<Snapshot> before, after;
  e.set_snapshot_sink([&](const Snapshot& s) {
    if (s.vehicles.size() == 7 && !before) before = s;
    for (const auto& ev : s.events)
      if (ev.kind == "merge") after = s;
  });
  e.run();
  ASSERT_TRUE(before && after);
  FrameStats stats;
  stats.absorb(*before);
  const auto f = encode_frame(*before, e.network(), e.scenario().v2x, stats);
  EXPECT_EQ(f["type"], "frame");
  ASSERT_EQ(f["vehicles"].size(), 7u);
  for (const auto& v : f["vehicles"]) {
    const Point p = point_at_station(e.network().get(v["path_id"]), Station{v["station"].get<double>()});
    EXPECT_DOUBLE_EQ(v["x"].get<double>(), p.x);
    EXPECT_DOUBLE_EQ(v["y"].get<double>(), p.y);
  }
  EXPECT_EQ(f["infra"]["range"], 400.0);

  stats.absorb(*after);
  const auto g = encode_frame(*after, e.network(), e.scenario().v2x, stats);
  for (const auto& v : g["vehicles"]) {
    if (v["id"] == 7) {
      EXPECT_EQ(v["path_id"], "highway");
    }
  }
  EXPECT_EQ(g["metrics"]["merged"], true);
}

TEST(Channel, KeepsNewestAndAllEvents) {
  SnapshotChannel ch;
  EXPECT_FALSE(ch.take());
  Snapshot a;
  a.t = 0.02;
  a.events = {{0.0, "spawn", {}}};
  Snapshot b;
  b.t = 0.04;
  b.events = {{0.02, "register", {}}};
  ch.publish(a);
  ch.publish(b);
  auto s = ch.take();
  ASSERT_TRUE(s);
  EXPECT_DOUBLE_EQ(s->t, 0.04);
  EXPECT_EQ(s->events.size(), 2u);
  EXPECT_FALSE(ch.take());  // nothing newer
  ch.publish(a);            // older than the last frame: never reordered
  EXPECT_FALSE(ch.take());

  InputQueue q;
  EXPECT_FALSE(q.drain());
  q.push(1.0);
  q.push(-2.0);
  EXPECT_EQ(q.drain(), -2.0);
  EXPECT_FALSE(q.drain());
}

TEST(Serve, HumanModeNeedsRealtime) {
  ServeOptions o;
  o.run.mode = "human";
  o.port = 0;
  o.handle_signals = false;
  std::ostringstream out, err;
  EXPECT_EQ(cmd_serve(o, out, err), cli::kValidation);
}

TEST(Serve, PortInUse) {
  asio::io_context ioc;
  tcp::acceptor holder(ioc, tcp::endpoint(tcp::v4(), 0));
  ServeOptions o;
  o.port = holder.local_endpoint().port();
  o.run.out = temp_dir("busy");
  o.handle_signals = false;
  std::ostringstream out, err;
  EXPECT_EQ(cmd_serve(o, out, err), cli::kIo);
  EXPECT_NE(err.str().find("port"), std::string::npos);
}

TEST(Serve, HeadlessRunWithoutClients) {
  ServeOptions o;
  o.port = 0;
  o.run.out = temp_dir("headless");
  o.handle_signals = false;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_serve(o, out, err), cli::kOk) << err.str();
  EXPECT_EQ(cli::load_metrics(*o.run.out).vehicles.size(), 7u);
  fs::remove_all(*o.run.out);
}

TEST(Serve, LiveDriverSession) {
  ServeOptions o;
  o.run.mode = "human";
  o.port = 0;
  o.realtime = true;
  o.speed = 20.0;
  o.run.out = temp_dir("live");
  o.handle_signals = false;

  std::promise<unsigned short> ready;
  std::atomic<bool> stop{false};
  std::ostringstream out, err;
  std::future<int> rc = std::async(std::launch::async, [&] {
    return cmd_serve(o, out, err, [&](unsigned short p) { ready.set_value(p); }, &stop);
  });
  const unsigned short port = ready.get_future().get();

  Client driver(port);
  driver.send({{"type", "hello"}, {"role", "driver"}});
  auto hello = driver.read_type("hello");
  ASSERT_TRUE(hello);
  EXPECT_EQ((*hello)["accepted"], true);
  EXPECT_EQ((*hello)["role"], "driver");
  EXPECT_EQ((*hello)["network"]["paths"].size(), 2u);

  Client second(port);
  second.send({{"type", "hello"}, {"role", "driver"}});
  auto denied = second.read_type("hello");
  ASSERT_TRUE(denied);
  EXPECT_EQ((*denied)["accepted"], false);
  EXPECT_EQ((*denied)["role"], "spectator");
  second.send({{"type", "pedals"}, {"throttle", 0.0}, {"brake", 1.0}, {"ts", 9.0}});
  EXPECT_TRUE(second.read_type("error"));

  driver.send({{"type", "pedals"}, {"throttle", 2.0}, {"brake", 0.0}, {"ts", 0.5}});
  EXPECT_TRUE(driver.read_type("error"));
  driver.send({{"type", "pedals"}, {"throttle", 1.0}, {"brake", 0.0}, {"ts", 1.0}});
  driver.send({{"type", "pedals"}, {"throttle", 0.0}, {"brake", 1.0}, {"ts", 0.5}});  // stale

  // Let the ramp vehicle spawn and drive a little, then ask for a stop.
  double t = 0.0;
  while (t < 44.0) {
    auto m = driver.read();
    ASSERT_TRUE(m);
    if ((*m)["type"] == "frame") {
      driver.frames.push_back(*m);
      t = (*m)["t"].get<double>();
    }
  }
  stop = true;
  auto end = driver.read_type("end");
  ASSERT_TRUE(end);
  EXPECT_EQ((*end)["partial"], true);
  EXPECT_EQ(rc.get(), cli::kOk) << err.str();

  for (std::size_t i = 1; i < driver.frames.size(); ++i)
    EXPECT_GT(driver.frames[i]["t"].get<double>(), driver.frames[i - 1]["t"].get<double>());
  EXPECT_EQ(driver.frames.back()["vehicles"].size(), 7u);

  const auto run = read_json_file(*o.run.out / "run.json");
  EXPECT_EQ(run["partial"], true);
  EXPECT_EQ(run["mode"], "human");
  std::ifstream csv(*o.run.out / "trajectory.csv");
  int rows = 0;
  for (const auto& r : read_trajectory_csv(csv)) {
    if (r.id != 7) continue;
    ++rows;
    EXPECT_DOUBLE_EQ(r.accel, 2.5) << "t=" << r.t;
  }
  EXPECT_GT(rows, 10);
  fs::remove_all(*o.run.out);
}
