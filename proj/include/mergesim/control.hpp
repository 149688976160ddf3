#pragma once

#include <algorithm>
#include <deque>
#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "mergesim/dynamics.hpp"
#include "mergesim/errors.hpp"
#include "mergesim/types.hpp"

namespace mergesim {

struct ConsensusGains {
  double delta{0.8};
  double gamma{6.0};
  double t_head_safe{0.5};
  double s_head_safe{25.0};
  double s_standstill{3.0};
};

inline double desired_headway(double v_k, const ConsensusGains& g) {
  return std::max(g.s_standstill, std::min(v_k * g.t_head_safe, g.s_head_safe));
}

/// a_k = -delta * [(s_k - s_p + s_head) + gamma * (v_k - v_p)] on signed stations.
inline double consensus_accel(double s_k, double v_k, double s_p, double v_p,
                              const ConsensusGains& g) {
  if (!std::isfinite(s_k) || !std::isfinite(v_k) || !std::isfinite(s_p) || !std::isfinite(v_p)) {
    throw NonFiniteInput("consensus_accel received a non-finite state");
  }
  const double s_head = desired_headway(v_k, g);
  return -g.delta * ((s_k - s_p + s_head) + g.gamma * (v_k - v_p));
}

/// Consensus law on bumper positions, so s_head is the clear distance to
/// the predecessor's rear.
inline double follow_accel(const VehicleState& ego, const VehicleState& pred,
                           const ConsensusGains& g) {
  const double s_rear = pred.station - 0.5 * (pred.length + ego.length);
  return consensus_accel(ego.station, ego.speed, s_rear, pred.speed, g);
}

/// The predecessor re-hosted on ego's path with its longitudinal state intact.
inline VehicleState project_ghost(const VehicleState& pred, const std::string& ego_path) {
  VehicleState ghost = pred;
  ghost.path_id = ego_path;
  return ghost;
}

inline double time_to_collision(double v_k, const LeaderMeasurement& m) {
  if (!m.present) return kInf;
  if (m.gap <= 0.0) {
    throw ZeroGap("gap to vehicle " + std::to_string(m.leader_id) + " is " + std::to_string(m.gap));
  }
  if (v_k <= m.leader_speed) return kInf;
  return m.gap / (v_k - m.leader_speed);
}

struct IdmParams {
  double a_f{1.5};
  double b{2.0};
  double s0{2.0};
  double T{1.0};
  double v0{30.0};
};

inline double idm_accel(double v, double gap, double v_leader, bool leader_present,
                        const IdmParams& p) {
  const double free = 1.0 - std::pow(v / p.v0, 4);
  if (!leader_present) return p.a_f * free;
  const double dv = v - v_leader;
  const double s_star = p.s0 + std::max(0.0, v * p.T + v * dv / (2.0 * std::sqrt(p.a_f * p.b)));
  const double r = s_star / std::max(gap, 1e-3);
  return p.a_f * (free - r * r);
}

inline double fallback_accel(double v_k, const LeaderMeasurement& m, const IdmParams& p) {
  return idm_accel(v_k, m.gap, m.leader_speed, m.present, p);
}

struct CruiseParams {
  double desired_speed{30.0};
  double time_gap{0.5};
  double speed_gain{0.4};
  double overspeed{3.0};  // ceiling above desired speed while following
};

struct SupervisorParams {
  double ttc_bound{2.0};
  double hysteresis{0.5};
  double radar_range{kDefaultRadarRange};
};

struct ControllerConfig {
  ConsensusGains gains{};
  CruiseParams cruise{};
  SupervisorParams supervisor{};
  IdmParams fallback{};
  ActuationLimits limits{};
};

struct Assignment {
  int sequence_number{};
  std::optional<VehicleId> predecessor{};
};

struct ControllerMemory {
  bool fallback{false};
};

struct ControlCommand {
  double accel{};
  ControlMode mode{ControlMode::cacc_cruise};
  double ttc{kInf};
  bool missing_predecessor{false};
};

struct ControlOutput {
  ControlCommand command;
  ControllerMemory memory;
};

inline const VehicleState& resolve_predecessor(std::span<const VehicleState> world, VehicleId id) {
  for (const auto& v : world) {
    if (v.id == id) return v;
  }
  throw MissingPredecessor("predecessor " + std::to_string(id) + " is not in the world view");
}

/// Pre-registration cruise: follow the physical leader with the CACC time gap,
/// or track the desired speed when alone.
inline double cruise_accel(const VehicleState& ego, std::span<const VehicleState> world,
                           const LeaderMeasurement& m, const ControllerConfig& cfg) {
  const auto& c = cfg.cruise;
  if (!m.present) return c.speed_gain * (c.desired_speed - ego.speed);
  ConsensusGains g = cfg.gains;
  g.t_head_safe = c.time_gap;
  const double follow = follow_accel(ego, resolve_predecessor(world, m.leader_id), g);
  return std::min(follow, c.speed_gain * (c.desired_speed + c.overspeed - ego.speed));
}

/// One 10 Hz controller evaluation against an immutable snapshot. TTC against
/// the physical leader is supervised on every tick; once latched, fallback
/// holds until TTC recovers past the hysteresis band.
inline ControlOutput controller_step(const VehicleState& ego, std::span<const VehicleState> world,
                                     const std::optional<Assignment>& assignment,
                                     const ControllerConfig& cfg, ControllerMemory memory) {
  ControlOutput out;
  const LeaderMeasurement m = sense_leader(world, ego, cfg.supervisor.radar_range);
  const double ttc = time_to_collision(ego.speed, m);
  out.command.ttc = ttc;

  if (ttc < cfg.supervisor.ttc_bound) {
    memory.fallback = true;
  } else if (memory.fallback && ttc >= cfg.supervisor.ttc_bound + cfg.supervisor.hysteresis) {
    memory.fallback = false;
  }
  out.memory = memory;

  double a = 0.0;
  if (memory.fallback) {
    a = fallback_accel(ego.speed, m, cfg.fallback);
    out.command.mode = ControlMode::fallback;
  } else {
    const VehicleState* pred = nullptr;
    if (assignment && assignment->predecessor) {
      try {
        pred = &resolve_predecessor(world, *assignment->predecessor);
      } catch (const MissingPredecessor&) {
        out.command.missing_predecessor = true;
      }
    }
    if (pred) {
      const VehicleState target =
          pred->path_id == ego.path_id ? *pred : project_ghost(*pred, ego.path_id);
      const bool interposed = m.present && m.leader_id != pred->id &&
                              resolve_predecessor(world, m.leader_id).station < target.station;
      if (interposed) {
        a = cruise_accel(ego, world, m, cfg);
        out.command.mode = ControlMode::cacc_cruise;
      } else {
        const auto& c = cfg.cruise;
        a = std::min(follow_accel(ego, target, cfg.gains),
                     c.speed_gain * (c.desired_speed + c.overspeed - ego.speed));
        out.command.mode = ControlMode::consensus_follow;
      }
    } else {
      a = cruise_accel(ego, world, m, cfg);
      out.command.mode = ControlMode::cacc_cruise;
    }
  }
  out.command.accel = std::clamp(a, cfg.limits.a_min, cfg.limits.a_max);
  return out;
}

// ---------------------------------------------------------------------------
// Driver models for the ramp vehicle in the baseline scenarios.

enum class DriverKind { cautious, aggressive, human };

inline std::string_view to_string(DriverKind k) {
  switch (k) {
    case DriverKind::cautious: return "cautious";
    case DriverKind::aggressive: return "aggressive";
    case DriverKind::human: return "human";
  }
  return "?";
}

struct CautiousParams {
  double accel{1.0};
  double target_speed{22.0};
};

struct AggressiveParams {
  double accel{2.5};
  double target_speed{30.0};
  double sight_distance{60.0};  // trigger, measured before the merge point
  double kp{0.5};
  double kd{1.2};
  double max_brake{4.0};
  double trailing_spacing{20.0};  // slot centre offset when joining the string's tail
};

struct HumanParams {
  double a_drive_max{2.5};
  double b_brake_max{4.0};
};

struct DriverModel {
  DriverKind kind{DriverKind::cautious};
  CautiousParams cautious{};
  AggressiveParams aggressive{};
  HumanParams human{};
  IdmParams follow{2.0, 2.0, 2.0, 1.2, 30.0};  // after merging
  double reaction_time{1.2};  // scripted drivers act on decisions this old
};

struct DriverMemory {
  bool committed{false};
  std::optional<VehicleId> slot_leader{};
  std::optional<VehicleId> slot_follower{};
  double human_command{0.0};
  std::deque<std::pair<double, double>> pending{};  // (decision time, accel)
};

struct DriverOutput {
  double accel{};
  DriverMemory memory;
};

namespace detail {

inline const VehicleState* find_vehicle(std::span<const VehicleState> world, VehicleId id) {
  for (const auto& v : world)
    if (v.id == id) return &v;
  return nullptr;
}

}  // namespace detail

/// Slot centre and speed the aggressive driver aims for, from its committed
/// neighbours.
inline std::optional<std::pair<double, double>> slot_target(std::span<const VehicleState> world,
                                                            const DriverMemory& mem,
                                                            const AggressiveParams& p) {
  const VehicleState* lead = mem.slot_leader ? detail::find_vehicle(world, *mem.slot_leader) : nullptr;
  const VehicleState* foll =
      mem.slot_follower ? detail::find_vehicle(world, *mem.slot_follower) : nullptr;
  if (lead && foll) {
    return std::pair{0.5 * (lead->station + foll->station), 0.5 * (lead->speed + foll->speed)};
  }
  if (lead) return std::pair{lead->station - p.trailing_spacing, lead->speed};
  if (foll) return std::pair{foll->station + p.trailing_spacing, foll->speed};
  return std::nullopt;
}

/// Picks the gap in the visible highway string whose centre is nearest the
/// driver's own station.
inline DriverMemory choose_slot(const VehicleState& ego, std::span<const VehicleState> world,
                                const std::string& highway_path, const AggressiveParams& p) {
  std::vector<const VehicleState*> hw;
  for (const auto& v : world)
    if (v.id != ego.id && v.path_id == highway_path) hw.push_back(&v);
  std::sort(hw.begin(), hw.end(),
            [](const VehicleState* a, const VehicleState* b) { return a->station > b->station; });
  DriverMemory mem;
  mem.committed = true;
  if (hw.empty()) return mem;
  double best = kInf;
  auto consider = [&](const VehicleState* lead, const VehicleState* foll) {
    DriverMemory cand = mem;
    cand.slot_leader = lead ? std::optional{lead->id} : std::nullopt;
    cand.slot_follower = foll ? std::optional{foll->id} : std::nullopt;
    const auto tgt = slot_target(world, cand, p);
    const double d = std::abs(tgt->first - ego.station);
    if (d < best) {
      best = d;
      mem.slot_leader = cand.slot_leader;
      mem.slot_follower = cand.slot_follower;
    }
  };
  consider(nullptr, hw.front());
  for (std::size_t i = 0; i + 1 < hw.size(); ++i) consider(hw[i], hw[i + 1]);
  consider(hw.back(), nullptr);
  return mem;
}

/// Ramp-vehicle acceleration for a scripted or live driver. Before the merge
/// the scripted drivers run their schedules; afterwards they follow the
/// physical leader like an ordinary human driver.
inline DriverOutput driver_accel(const DriverModel& model, double t, const VehicleState& ego,
                                 std::span<const VehicleState> world,
                                 const std::string& highway_path, DriverMemory memory,
                                 const ActuationLimits& limits) {
  DriverOutput out;
  double a = 0.0;
  const bool merged = ego.path_id == highway_path;
  if (model.kind == DriverKind::human) {
    a = memory.human_command;
  } else if (merged) {
    const LeaderMeasurement m = sense_leader(world, ego, kDefaultRadarRange);
    a = idm_accel(ego.speed, m.gap, m.leader_speed, m.present, model.follow);
    const double brake =
        model.kind == DriverKind::aggressive ? model.aggressive.max_brake : -limits.a_min;
    a = std::max(a, -brake);
  } else if (model.kind == DriverKind::cautious) {
    const auto& p = model.cautious;
    a = ego.speed < p.target_speed ? std::min(p.accel, (p.target_speed - ego.speed) / 0.1) : 0.0;
  } else {
    const auto& p = model.aggressive;
    if (!memory.committed && ego.station >= -p.sight_distance) {
      memory = choose_slot(ego, world, highway_path, p);
    }
    if (memory.committed) {
      const auto tgt = slot_target(world, memory, p);
      if (tgt) {
        a = p.kp * (tgt->first - ego.station) + p.kd * (tgt->second - ego.speed);
        a = std::clamp(a, -p.max_brake, p.accel);
      } else {
        a = p.accel * (ego.speed < p.target_speed ? 1.0 : 0.0);
      }
    } else {
      a = ego.speed < p.target_speed ? std::min(p.accel, (p.target_speed - ego.speed) / 0.1) : 0.0;
    }
  }
  if (model.kind != DriverKind::human && model.reaction_time > 0.0) {
    memory.pending.emplace_back(t, a);
    while (memory.pending.size() > 1 && memory.pending[1].first <= t - model.reaction_time + 1e-9)
      memory.pending.pop_front();
    a = memory.pending.front().second;
  }
  out.accel = std::clamp(a, limits.a_min, limits.a_max);
  out.memory = memory;
  return out;
}

}  // namespace mergesim
