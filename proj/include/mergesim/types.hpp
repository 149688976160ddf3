#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "mergesim/errors.hpp"

namespace mergesim {

using VehicleId = int;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Point {
  double x{};
  double y{};

  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

enum class PathKind { highway_lane, on_ramp };

enum class VehicleClass { highway, ramp };

enum class ControlMode { cacc_cruise, consensus_follow, fallback, driver };

inline std::string_view to_string(PathKind k) {
  return k == PathKind::highway_lane ? "highway-lane" : "on-ramp";
}

inline std::string_view to_string(VehicleClass c) {
  return c == VehicleClass::highway ? "highway" : "ramp";
}

inline std::string_view to_string(ControlMode m) {
  switch (m) {
    case ControlMode::cacc_cruise: return "cacc-cruise";
    case ControlMode::consensus_follow: return "consensus-follow";
    case ControlMode::fallback: return "fallback";
    case ControlMode::driver: return "driver";
  }
  return "?";
}

inline std::optional<PathKind> path_kind_from_string(std::string_view s) {
  if (s == "highway-lane") return PathKind::highway_lane;
  if (s == "on-ramp") return PathKind::on_ramp;
  return std::nullopt;
}

inline std::optional<ControlMode> control_mode_from_string(std::string_view s) {
  if (s == "cacc-cruise") return ControlMode::cacc_cruise;
  if (s == "consensus-follow") return ControlMode::consensus_follow;
  if (s == "fallback") return ControlMode::fallback;
  if (s == "driver") return ControlMode::driver;
  return std::nullopt;
}

}  // namespace mergesim
