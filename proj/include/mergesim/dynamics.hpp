#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "mergesim/errors.hpp"
#include "mergesim/types.hpp"

namespace mergesim {

struct ActuationLimits {
  double a_max{2.5};
  double a_min{-4.0};
  std::optional<double> jerk_max{};
};

inline constexpr double kDefaultDt = 0.02;
inline constexpr double kDefaultRadarRange = 150.0;
inline constexpr double kDefaultVehicleLength = 4.5;

struct VehicleState {
  VehicleId id{};
  std::string path_id;
  double station{};  // merge-relative, see Station
  double speed{};
  double accel{};
  double length{kDefaultVehicleLength};
  VehicleClass cls{VehicleClass::highway};
  ControlMode mode{ControlMode::cacc_cruise};
};

struct LeaderMeasurement {
  double gap{kInf};  // bumper to bumper
  double leader_speed{};
  bool present{false};
  VehicleId leader_id{};
};

/// Explicit kinematic update. The applied acceleration is the command clamped
/// to the limits (and to the jerk bound when set), then reduced so the speed
/// does not go negative.
inline VehicleState step_vehicle(const VehicleState& state, double command,
                                 const ActuationLimits& limits, double dt) {
  if (!std::isfinite(command)) {
    throw NonFiniteCommand("command for vehicle " + std::to_string(state.id) + " is not finite");
  }
  double a = std::clamp(command, limits.a_min, limits.a_max);
  if (limits.jerk_max) {
    const double da = *limits.jerk_max * dt;
    a = std::clamp(a, state.accel - da, state.accel + da);
  }
  if (state.speed + a * dt < 0.0) {
    a = -state.speed / dt;
  }
  VehicleState next = state;
  next.accel = a;
  next.station = state.station + state.speed * dt + 0.5 * a * dt * dt;
  next.speed = std::max(0.0, state.speed + a * dt);
  return next;
}

/// Nearest vehicle ahead of ego on the same path whose bumper gap is within
/// range. Vehicles at exactly ego's station are resolved by id so two
/// coincident vehicles still see each other once.
inline LeaderMeasurement sense_leader(std::span<const VehicleState> world, const VehicleState& ego,
                                      double range = kDefaultRadarRange) {
  LeaderMeasurement best;
  double best_ds = kInf;
  for (const auto& other : world) {
    if (other.id == ego.id || other.path_id != ego.path_id) continue;
    const double ds = other.station - ego.station;
    if (ds < 0.0 || (ds == 0.0 && other.id < ego.id)) continue;
    const double gap = ds - 0.5 * (other.length + ego.length);
    if (gap > range) continue;
    if (ds < best_ds) {
      best_ds = ds;
      best.gap = gap;
      best.leader_speed = other.speed;
      best.present = true;
      best.leader_id = other.id;
    }
  }
  return best;
}

}  // namespace mergesim
