#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mergesim/control.hpp"
#include "mergesim/dynamics.hpp"
#include "mergesim/errors.hpp"
#include "mergesim/geometry.hpp"
#include "mergesim/rng.hpp"
#include "mergesim/scenario.hpp"
#include "mergesim/sequencing.hpp"
#include "mergesim/v2x.hpp"

namespace mergesim {

struct TrajectoryRecord {
  double t{};
  VehicleId id{};
  std::string path_id;
  double station{};
  double speed{};
  double accel{};
  ControlMode mode{ControlMode::cacc_cruise};
  std::optional<int> seq{};
  double ttc{kInf};
};

struct Event {
  double t{};
  std::string kind;
  nlohmann::json payload = nlohmann::json::object();
};

struct MeasurementWindow {
  double start{};
  double end{};
};

/// Immutable copy of the world after a physics step, for concurrent readers.
struct Snapshot {
  double t{};
  long step{};
  std::vector<VehicleState> vehicles;
  std::map<VehicleId, int> sequence;
  std::map<VehicleId, double> ttc;
  std::vector<VehicleId> registered;  // inside the V2I range
  std::vector<Event> events;  // emitted since the previous snapshot
  bool finished{false};
};

/// First station along the path that lies inside the V2I range, refined by
/// bisection; the path start when it begins in range.
inline double range_entry_station(const PathGeometry& path, const InfraRegistry& reg) {
  const double lo0 = path.min_station().value;
  const double hi0 = path.max_station().value;
  if (reg.in_range(point_at_station(path, Station{lo0}))) return lo0;
  double prev = lo0;
  for (double s = lo0 + 1.0; s <= hi0 + 1.0; s += 1.0) {
    const double c = std::min(s, hi0);
    if (reg.in_range(point_at_station(path, Station{c}))) {
      double lo = prev, hi = c;
      for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (reg.in_range(point_at_station(path, Station{mid})) ? hi : lo) = mid;
      }
      return hi;
    }
    prev = c;
  }
  throw Error("path '" + path.id() + "' never enters the V2I range");
}

struct SpawnedVehicle {
  VehicleState state;
  double spawn_time{};
  bool connected{true};
};

/// Initial roster. Draws are made in roster order from a single generator:
/// leader speed, then (speed, spacing) for each follower.
inline std::vector<SpawnedVehicle> spawn(const Scenario& sc, Rng& rng) {
  const RoadNetwork& net = *sc.network;
  const auto& hw = net.highway();
  const auto& rp = net.ramp();
  const InfraRegistry probe(sc.v2x);
  const double entry = range_entry_station(hw, probe);
  const auto& ro = sc.roster;
  const double min_spacing = ro.vehicle_length + sc.gains.s_standstill;

  std::vector<SpawnedVehicle> out;
  double station = 0.0;
  for (int i = 0; i < ro.highway_count; ++i) {
    SpawnedVehicle v;
    v.state.id = i + 1;
    v.state.path_id = hw.id();
    v.state.cls = VehicleClass::highway;
    v.state.length = ro.vehicle_length;
    v.state.speed = rng.uniform(ro.speed_min, ro.speed_max);
    if (i == 0) {
      // Under proportional speed tracking the leader falls behind a
      // constant-speed schedule by (v_des - v0) / gain; start that much ahead.
      station = entry - sc.highway_desired_speed * ro.highway_approach_time +
                (sc.highway_desired_speed - v.state.speed) / sc.cruise.speed_gain;
    } else {
      const double spacing = rng.uniform(ro.spacing_min, ro.spacing_max);
      if (spacing < min_spacing) {
        throw InfeasibleSpawn("spacing " + std::to_string(spacing) + " m behind vehicle " +
                              std::to_string(i) + " is below " + std::to_string(min_spacing));
      }
      station -= spacing;
    }
    if (station < hw.min_station().value) {
      throw InfeasibleSpawn("vehicle " + std::to_string(i + 1) + " would start before the highway path");
    }
    v.state.station = station;
    out.push_back(v);
  }
  for (int j = 0; j < ro.ramp_count; ++j) {
    SpawnedVehicle v;
    v.state.id = ro.highway_count + j + 1;
    v.state.path_id = rp.id();
    v.state.cls = VehicleClass::ramp;
    v.state.length = ro.vehicle_length;
    v.state.station = rp.min_station().value;
    v.state.speed = sc.ramp_initial_speed;
    v.spawn_time = ro.ramp_spawn_time + j * ro.ramp_spawn_interval;
    v.connected = sc.mode == RunMode::coop;
    if (j > 0 && ro.ramp_spawn_interval * sc.ramp_initial_speed < min_spacing) {
      throw InfeasibleSpawn("ramp vehicles would spawn closer than " + std::to_string(min_spacing) + " m");
    }
    out.push_back(v);
  }
  return out;
}

/// Fixed-step simulation of one scenario. Physics runs every dt; controllers,
/// V2I bookkeeping and logging every control_every steps; batch sorting on
/// control ticks at multiples of the sort period.
class Engine {
 public:
  using InputSource = std::function<std::optional<double>()>;
  using SnapshotSink = std::function<void(const Snapshot&)>;

  explicit Engine(Scenario sc)
      : sc_(std::move(sc)), registry_(sc_.v2x), rng_(sc_.seed), cfg_(sc_.controller_config()),
        driver_(sc_.driver_model()) {
    if (!sc_.network) sc_.network = default_network(sc_.geometry.ramp_length);
    const auto& net = *sc_.network;
    highway_id_ = net.highway().id();
    for (const auto& p : net.paths) window_start_[p.id()] = range_entry_station(p, registry_);
    pending_ = spawn(sc_, rng_);
    std::stable_sort(pending_.begin(), pending_.end(),
                     [](const SpawnedVehicle& a, const SpawnedVehicle& b) { return a.spawn_time < b.spawn_time; });
    for (const auto& v : pending_) {
      MeasurementWindow w;
      w.start = window_start_.at(v.state.path_id);
      w.end = w.start + sc_.measurement_distance;
      windows_[v.state.id] = w;
    }
    sort_every_ = std::max(1L, std::lround(sc_.sequencing.sort_period / sc_.dt));
  }

  const Scenario& scenario() const { return sc_; }
  const RoadNetwork& network() const { return *sc_.network; }
  const std::vector<TrajectoryRecord>& trajectory() const { return log_; }
  const std::vector<Event>& events() const { return events_; }
  const std::map<VehicleId, MeasurementWindow>& windows() const { return windows_; }
  const InfraRegistry& registry() const { return registry_; }
  double time() const { return static_cast<double>(step_) * sc_.dt; }
  long step_index() const { return step_; }
  bool finished() const { return finished_; }
  bool partial() const { return partial_; }
  std::vector<VehicleState> vehicles() const {
    std::vector<VehicleState> v;
    for (const auto& a : active_) v.push_back(a.state);
    return v;
  }

  void set_input_source(InputSource src) { input_ = std::move(src); }
  void set_snapshot_sink(SnapshotSink sink) { sink_ = std::move(sink); }

  /// Asks the loop to stop at the next step; the run is marked partial.
  void request_stop() { stop_requested_.store(true); }

  /// Advances one physics step. Returns false once the run has ended.
  bool step() {
    if (finished_) return false;
    if (stop_requested_.load()) {
      finish(true);
      publish();
      return false;
    }
    const double t = time();
    spawn_due(t);
    if (step_ % sc_.control_every == 0) {
      control_tick(t);
      if (finished_) {
        publish();
        return false;
      }
    }
    integrate();
    ++step_;
    post_step(time());
    if (!finished_ && time() >= sc_.duration - 1e-9) {
      // Close with a final control-cadence row so the log covers the end.
      if (step_ % sc_.control_every == 0) control_tick(time());
      if (!finished_) finish(!all_complete());
    }
    publish();
    return !finished_;
  }

  /// Runs to completion. SafetyViolation and ControllerPanic propagate; the
  /// logs up to that point stay available.
  void run() {
    while (step()) {
    }
  }

 private:
  struct Agent {
    VehicleState state;
    bool connected{true};
    double command{0.0};
    ControllerMemory memory{};
    DriverMemory driver{};
    double ttc{kInf};
    bool decelerating{false};
  };

  bool is_driver(const Agent& a) const {
    return sc_.mode != RunMode::coop && a.state.cls == VehicleClass::ramp;
  }

  void emit(double t, std::string kind, nlohmann::json payload = nlohmann::json::object()) {
    events_.push_back({t, std::move(kind), std::move(payload)});
  }

  void spawn_due(double t) {
    while (!pending_.empty() && pending_.front().spawn_time <= t + 1e-9) {
      Agent a;
      a.state = pending_.front().state;
      a.connected = pending_.front().connected;
      a.state.mode = is_driver(a) ? ControlMode::driver : ControlMode::cacc_cruise;
      pending_.erase(pending_.begin());
      emit(t, "spawn",
           {{"id", a.state.id}, {"path", a.state.path_id}, {"station", a.state.station},
            {"speed", a.state.speed}});
      active_.push_back(a);
      std::sort(active_.begin(), active_.end(),
                [](const Agent& x, const Agent& y) { return x.state.id < y.state.id; });
    }
  }

  void v2i_transitions(double t) {
    const auto& net = *sc_.network;
    for (auto& a : active_) {
      if (!a.connected) continue;
      const auto& path = net.get(a.state.path_id);
      const Point pos = point_at_station(path, Station{a.state.station});
      const bool inside = registry_.in_range(pos);
      const bool known = registry_.is_registered(a.state.id);
      StatusMessage msg{a.state.id, t, a.state.speed, a.state.accel, pos, a.state.cls};
      if (inside && !known) {
        const Station matched = match_station(path, pos, sc_.geometry.lateral_tolerance);
        registry_.register_entry(msg, matched.distance_to_merge(), matched.value);
        emit(t, "register",
             {{"id", a.state.id}, {"distance_to_merge", matched.distance_to_merge()},
              {"speed", a.state.speed}});
      } else if (!inside && known) {
        registry_.handle_exit(a.state.id);
        emit(t, "exit", {{"id", a.state.id}});
      } else if (inside) {
        registry_.update_status(msg);
      }
    }
  }

  void control_tick(double t) {
    v2i_transitions(t);

    std::vector<VehicleState> world;
    for (const auto& a : active_) world.push_back(a.state);

    for (auto& a : active_) {
      const ControlMode before = a.state.mode;
      if (is_driver(a)) {
        if (driver_.kind == DriverKind::human && input_) {
          if (auto cmd = input_()) a.driver.human_command = *cmd;
        }
        const bool was_committed = a.driver.committed;
        const DriverOutput d =
            driver_accel(driver_, t, a.state, world, highway_id_, a.driver, sc_.limits);
        a.driver = d.memory;
        if (!was_committed && a.driver.committed) {
          emit(t, "driver_commit",
               {{"id", a.state.id},
                {"slot_leader", a.driver.slot_leader ? nlohmann::json(*a.driver.slot_leader) : nlohmann::json(nullptr)},
                {"slot_follower", a.driver.slot_follower ? nlohmann::json(*a.driver.slot_follower) : nlohmann::json(nullptr)}});
        }
        a.command = d.accel;
        a.ttc = kInf;
        const LeaderMeasurement m = sense_leader(world, a.state, sc_.supervisor.radar_range);
        if (m.present && m.gap > 0.0) a.ttc = time_to_collision(a.state.speed, m);
        a.state.mode = ControlMode::driver;
      } else {
        std::optional<Assignment> asg;
        if (auto seq = registry_.sequence_of(a.state.id)) {
          asg = Assignment{*seq, registry_.predecessor_of(a.state.id)};
        }
        ControlOutput out;
        try {
          out = controller_step(a.state, world, asg, cfg_, a.memory);
        } catch (const NonFiniteInput& e) {
          throw ControllerPanic(a.state.id, step_, e.what());
        }
        if (out.command.missing_predecessor) {
          emit(t, "missing_predecessor", {{"id", a.state.id}});
        }
        a.memory = out.memory;
        a.command = out.command.accel;
        a.ttc = out.command.ttc;
        a.state.mode = out.command.mode;
      }
      if (!std::isfinite(a.command)) {
        throw ControllerPanic(a.state.id, step_, "non-finite acceleration command");
      }
      if (a.state.mode != before) {
        emit(t, "mode",
             {{"id", a.state.id}, {"from", std::string(to_string(before))},
              {"to", std::string(to_string(a.state.mode))}});
        if (a.state.mode == ControlMode::fallback) {
          emit(t, "fallback_engaged", {{"id", a.state.id}, {"ttc", finite_or_null(a.ttc)}});
        } else if (before == ControlMode::fallback) {
          emit(t, "fallback_released", {{"id", a.state.id}, {"ttc", finite_or_null(a.ttc)}});
        }
      }
      if (a.state.cls == VehicleClass::highway) {
        const bool decel = a.command <= kDecelEventThreshold;
        if (decel && !a.decelerating) {
          emit(t, "decel", {{"id", a.state.id}, {"accel", a.command}});
        }
        a.decelerating = decel;
      }
    }

    for (const auto& a : active_) {
      TrajectoryRecord r;
      r.t = t;
      r.id = a.state.id;
      r.path_id = a.state.path_id;
      r.station = a.state.station;
      r.speed = a.state.speed;
      r.accel = a.command;
      r.mode = a.state.mode;
      r.seq = registry_.sequence_of(a.state.id);
      r.ttc = a.ttc;
      log_.push_back(r);
    }

    if (step_ > 0 && step_ % sort_every_ == 0) {
      const auto res = sort_tick(registry_, t, sc_.sequencing, sc_.geometry.ramp_length);
      if (!res.sorted.assignments.empty()) {
        nlohmann::json list = nlohmann::json::array();
        for (std::size_t i = 0; i < res.sorted.assignments.size(); ++i) {
          const auto& asg = res.sorted.assignments[i];
          const auto& est = res.sorted.estimates[i];
          list.push_back({{"id", asg.vehicle_id},
                          {"seq", asg.sequence_number},
                          {"predecessor", asg.predecessor_id ? nlohmann::json(*asg.predecessor_id)
                                                             : nlohmann::json(nullptr)},
                          {"raw_eta", est.raw_eta},
                          {"adjusted_eta", est.adjusted_eta}});
        }
        emit(t, "sequence",
             {{"regime", std::string(to_string(res.plan.regime))},
              {"v_m", res.plan.v_m},
              {"v_hs_avg", res.plan.v_hs_avg},
              {"v_rs_avg", res.plan.v_rs_avg},
              {"assignments", list}});
      }
    }

    if (all_complete()) finish(false);
  }

  static nlohmann::json finite_or_null(double x) {
    return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
  }

  bool all_complete() const {
    if (!pending_.empty()) return false;
    for (const auto& a : active_) {
      if (a.state.station < windows_.at(a.state.id).end) return false;
    }
    return true;
  }

  void integrate() {
    const auto& net = *sc_.network;
    for (auto& a : active_) {
      a.state = step_vehicle(a.state, a.command, sc_.limits, sc_.dt);
    }
    merge_onto_highway(time() + sc_.dt);
    // Vehicles running off the end of their path leave the simulation.
    for (auto it = active_.begin(); it != active_.end();) {
      const auto& path = net.get(it->state.path_id);
      if (it->state.station > path.max_station().value) {
        emit(time() + sc_.dt, "path_end", {{"id", it->state.id}});
        if (it->connected && registry_.is_registered(it->state.id)) registry_.handle_exit(it->state.id);
        it = active_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void merge_onto_highway(double t) {
    for (auto& a : active_) {
      if (a.state.path_id != highway_id_ && a.state.station >= 0.0) {
        const std::string from = a.state.path_id;
        a.state.path_id = highway_id_;
        nlohmann::json accels = nlohmann::json::object();
        for (const auto& o : active_) {
          if (o.state.cls == VehicleClass::highway) accels[std::to_string(o.state.id)] = o.state.accel;
        }
        emit(t, "merge",
             {{"id", a.state.id}, {"from", from}, {"station", a.state.station},
              {"speed", a.state.speed}, {"highway_accel", accels}});
      }
    }
  }

  void post_step(double t) {
    // Same-path contact check.
    std::map<std::string, std::vector<const Agent*>> by_path;
    for (const auto& a : active_) by_path[a.state.path_id].push_back(&a);
    for (auto& [path, list] : by_path) {
      std::sort(list.begin(), list.end(), [](const Agent* x, const Agent* y) {
        return x->state.station < y->state.station;
      });
      for (std::size_t i = 0; i + 1 < list.size(); ++i) {
        const auto& f = list[i]->state;
        const auto& l = list[i + 1]->state;
        const double gap = l.station - f.station - 0.5 * (l.length + f.length);
        if (gap <= 0.0) {
          emit(t, "safety_violation", {{"follower", f.id}, {"leader", l.id}, {"gap", gap}});
          finish(true);
          throw SafetyViolation(t, f.id, l.id, gap);
        }
      }
    }
  }

  void finish(bool partial) {
    if (finished_) return;
    finished_ = true;
    partial_ = partial;
    emit(time(), "end", {{"partial", partial}});
  }

  void publish() {
    if (!sink_) return;
    Snapshot s;
    s.t = time();
    s.step = step_;
    for (const auto& a : active_) {
      s.vehicles.push_back(a.state);
      if (auto q = registry_.sequence_of(a.state.id)) s.sequence[a.state.id] = *q;
      s.ttc[a.state.id] = a.ttc;
      if (registry_.is_registered(a.state.id)) s.registered.push_back(a.state.id);
    }
    s.events.assign(events_.begin() + static_cast<long>(published_events_), events_.end());
    published_events_ = events_.size();
    s.finished = finished_;
    sink_(s);
  }

 public:
  static constexpr double kDecelEventThreshold = -1.0;

 private:
  Scenario sc_;
  InfraRegistry registry_;
  Rng rng_;
  ControllerConfig cfg_;
  DriverModel driver_;
  std::string highway_id_;
  std::map<std::string, double> window_start_;
  std::map<VehicleId, MeasurementWindow> windows_;
  std::vector<SpawnedVehicle> pending_;
  std::vector<Agent> active_;
  std::vector<TrajectoryRecord> log_;
  std::vector<Event> events_;
  std::size_t published_events_{0};
  long step_{0};
  long sort_every_{250};
  bool finished_{false};
  bool partial_{false};
  std::atomic<bool> stop_requested_{false};
  InputSource input_;
  SnapshotSink sink_;
};

}  // namespace mergesim
