#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "mergesim/errors.hpp"
#include "mergesim/types.hpp"

namespace mergesim {

/// Signed arc length along a path, measured from the merge point and
/// increasing in the direction of travel. Upstream of the merge point the
/// value is negative and its magnitude is the distance to merge.
struct Station {
  double value{};

  double distance_to_merge() const { return value < 0.0 ? -value : 0.0; }

  friend auto operator<=>(const Station&, const Station&) = default;
};

struct Projection {
  std::size_t segment{};  // index of the owning segment's first waypoint
  double t{};             // fraction along the segment, in [0, 1]
  double arc{};           // arc length from path start
  double lateral{};       // perpendicular distance from the polyline
};

/// Waypoint polyline with cumulative arc length and the station of the merge
/// point. Immutable once built.
class PathGeometry {
 public:
  static PathGeometry build(std::string id, std::vector<Point> waypoints, Point merge_point,
                            PathKind kind, double grade = 0.0, double merge_tolerance = 0.5) {
    if (waypoints.size() < 2) {
      throw DegeneratePath("path '" + id + "' needs at least 2 waypoints");
    }
    PathGeometry p;
    p.id_ = std::move(id);
    p.kind_ = kind;
    p.grade_ = grade;
    p.waypoints_ = std::move(waypoints);
    p.cum_length_.resize(p.waypoints_.size());
    p.cum_length_[0] = 0.0;
    for (std::size_t i = 1; i < p.waypoints_.size(); ++i) {
      const double len = distance(p.waypoints_[i - 1], p.waypoints_[i]);
      if (!(len > 0.0)) {
        throw DegeneratePath("path '" + p.id_ + "' has coincident waypoints at index " +
                             std::to_string(i - 1) + " and " + std::to_string(i));
      }
      p.cum_length_[i] = p.cum_length_[i - 1] + len;
    }
    const Projection m = p.project(merge_point);
    if (m.lateral > merge_tolerance) {
      throw MergePointOffPath("merge point is " + std::to_string(m.lateral) +
                              " m from path '" + p.id_ + "'");
    }
    p.merge_arc_ = m.arc;
    return p;
  }

  const std::string& id() const { return id_; }
  PathKind kind() const { return kind_; }
  double grade() const { return grade_; }
  const std::vector<Point>& waypoints() const { return waypoints_; }
  const std::vector<double>& cum_length() const { return cum_length_; }
  double total_length() const { return cum_length_.back(); }

  /// Arc length of the merge point from the path start.
  double merge_station() const { return merge_arc_; }

  Station min_station() const { return {-merge_arc_}; }
  Station max_station() const { return {total_length() - merge_arc_}; }

  /// Closest projection onto the polyline; ties go to the earlier segment.
  Projection project(Point q) const {
    Projection best;
    best.lateral = kInf;
    for (std::size_t i = 0; i + 1 < waypoints_.size(); ++i) {
      const Point a = waypoints_[i];
      const Point b = waypoints_[i + 1];
      const double dx = b.x - a.x;
      const double dy = b.y - a.y;
      const double len2 = dx * dx + dy * dy;
      const double t = std::clamp(((q.x - a.x) * dx + (q.y - a.y) * dy) / len2, 0.0, 1.0);
      const Point foot{a.x + t * dx, a.y + t * dy};
      const double d = distance(q, foot);
      if (d < best.lateral) {
        best.segment = i;
        best.t = t;
        best.arc = cum_length_[i] + t * (cum_length_[i + 1] - cum_length_[i]);
        best.lateral = d;
      }
    }
    return best;
  }

 private:
  PathGeometry() = default;

  std::string id_;
  PathKind kind_{PathKind::highway_lane};
  double grade_{0.0};
  std::vector<Point> waypoints_;
  std::vector<double> cum_length_;
  double merge_arc_{0.0};
};

inline constexpr double kDefaultLateralTolerance = 5.0;

/// Map-matches a planar position to a merge-relative station.
inline Station match_station(const PathGeometry& path, Point position,
                             double lateral_tolerance = kDefaultLateralTolerance) {
  const Projection p = path.project(position);
  if (p.lateral > lateral_tolerance) {
    throw OffPath("position (" + std::to_string(position.x) + ", " + std::to_string(position.y) +
                  ") is " + std::to_string(p.lateral) + " m from path '" + path.id() + "'");
  }
  return {p.arc - path.merge_station()};
}

inline Point point_at_station(const PathGeometry& path, Station station) {
  constexpr double eps = 1e-9;
  const double arc = station.value + path.merge_station();
  if (!std::isfinite(arc) || arc < -eps || arc > path.total_length() + eps) {
    throw OutOfRange("station " + std::to_string(station.value) + " is outside path '" +
                     path.id() + "'");
  }
  const auto& cum = path.cum_length();
  const auto& pts = path.waypoints();
  const double a = std::clamp(arc, 0.0, path.total_length());
  auto it = std::upper_bound(cum.begin(), cum.end(), a);
  std::size_t i1 = std::clamp<std::size_t>(static_cast<std::size_t>(it - cum.begin()), 1,
                                           pts.size() - 1);
  const std::size_t i0 = i1 - 1;
  const double t = (a - cum[i0]) / (cum[i1] - cum[i0]);
  return {pts[i0].x + t * (pts[i1].x - pts[i0].x), pts[i0].y + t * (pts[i1].y - pts[i0].y)};
}

/// The set of paths a scenario runs on: exactly one highway lane and one
/// on-ramp sharing a merge point.
struct RoadNetwork {
  std::vector<PathGeometry> paths;

  const PathGeometry& get(const std::string& id) const {
    for (const auto& p : paths)
      if (p.id() == id) return p;
    throw Error("unknown path '" + id + "'");
  }
  const PathGeometry& of_kind(PathKind kind) const {
    for (const auto& p : paths)
      if (p.kind() == kind) return p;
    throw Error("network has no " + std::string(to_string(kind)) + " path");
  }
  const PathGeometry& highway() const { return of_kind(PathKind::highway_lane); }
  const PathGeometry& ramp() const { return of_kind(PathKind::on_ramp); }
};

/// Straight highway lane along y = 0 and a ramp of the given length that
/// runs in at 12 degrees, then parallels the lane for its last 60 m before
/// joining at the origin.
inline RoadNetwork default_network(double ramp_length = 267.0, double highway_upstream = 2500.0,
                                   double highway_downstream = 3000.0) {
  const Point merge{0.0, 0.0};
  const Point p1{-60.0, -3.5};
  const double tail = distance(p1, merge);
  if (!(ramp_length > tail)) {
    throw DegeneratePath("ramp length must exceed " + std::to_string(tail) + " m");
  }
  const double angle = 12.0 * std::numbers::pi / 180.0;
  const double lead = ramp_length - tail;
  const Point p0{p1.x - lead * std::cos(angle), p1.y - lead * std::sin(angle)};
  RoadNetwork net;
  net.paths.push_back(PathGeometry::build(
      "highway", {{-highway_upstream, 0.0}, merge, {highway_downstream, 0.0}}, merge,
      PathKind::highway_lane));
  net.paths.push_back(PathGeometry::build("ramp", {p0, p1, merge}, merge, PathKind::on_ramp));
  return net;
}

}  // namespace mergesim
