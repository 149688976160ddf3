#pragma once

// Reference implementations used only by the tests. None of them call into
// the library's closed forms; they integrate or search numerically.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mergesim/types.hpp"

namespace oracle {

struct Profile {
  double time{};            // seconds to cover the distance
  double terminal_speed{};  // speed when the distance is covered
  bool reached_target{false};
  double reach_distance{std::numeric_limits<double>::infinity()};  // where the target speed was hit
};

/// Forward integration of "move toward speed V at rate a, then hold V" over
/// distance s with fixed dt. Acceleration is constant within each step; a step
/// that would overshoot V or s is split at the event. Once V is held the
/// remaining distance is covered in one constant-speed piece.
inline Profile move_toward(double v0, double V, double s, double a, double dt = 1e-3) {
  Profile out;
  double t = 0.0;
  double x = 0.0;
  double v = v0;
  if (v == V) {
    out.reached_target = true;
    out.reach_distance = 0.0;
  }
  while (x < s) {
    if (out.reached_target) {
      t += (s - x) / v;
      x = s;
      break;
    }
    const double acc = V > v ? a : -a;
    double h = dt;
    const double t_hit = (V - v) / acc;
    bool hit = false;
    if (t_hit <= h) {
      h = t_hit;
      hit = true;
    }
    const double dx = v * h + 0.5 * acc * h * h;
    if (x + dx >= s) {
      // Root of x + v*tau + acc*tau^2/2 = s inside the step.
      const double rem = s - x;
      double tau;
      if (std::abs(acc) < 1e-15) {
        tau = rem / v;
      } else {
        const double disc = std::max(0.0, v * v + 2.0 * acc * rem);
        tau = (-v + std::sqrt(disc)) / acc;
      }
      t += tau;
      v += acc * tau;
      x = s;
      if (hit && std::abs(tau - h) < 1e-12) {
        out.reached_target = true;
        out.reach_distance = s;
      }
      break;
    }
    t += h;
    x += dx;
    v = hit ? V : v + acc * h;
    if (hit) {
      out.reached_target = true;
      out.reach_distance = x;
    }
  }
  out.time = t;
  out.terminal_speed = v;
  return out;
}

/// Distance to change speed from v0 to V at constant rate a, by stepping.
inline double accel_distance(double v0, double V, double a, double dt = 1e-3) {
  double x = 0.0;
  double v = v0;
  while (v < V) {
    const double h = std::min(dt, (V - v) / a);
    x += v * h + 0.5 * a * h * h;
    v = std::min(V, v + a * h);
  }
  return x;
}

/// Nearest point on a polyline sampled every `step` metres, reported as arc
/// length. Brute force over every sample.
inline double nearest_arc(const std::vector<mergesim::Point>& pts, mergesim::Point q,
                          double step = 1e-3) {
  double best_d = std::numeric_limits<double>::infinity();
  double best_arc = 0.0;
  double arc0 = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double len = std::hypot(pts[i + 1].x - pts[i].x, pts[i + 1].y - pts[i].y);
    const auto n = static_cast<long>(std::ceil(len / step));
    for (long k = 0; k <= n; ++k) {
      const double u = std::min(1.0, static_cast<double>(k) * step / len);
      const double x = pts[i].x + u * (pts[i + 1].x - pts[i].x);
      const double y = pts[i].y + u * (pts[i + 1].y - pts[i].y);
      const double d = (x - q.x) * (x - q.x) + (y - q.y) * (y - q.y);
      if (d < best_d) {
        best_d = d;
        best_arc = arc0 + u * len;
      }
    }
    arc0 += len;
  }
  return best_arc;
}

/// Textbook intelligent driver model.
inline double idm(double v, double gap, double dv, double a, double b, double s0, double T,
                  double v0) {
  const double s_star = s0 + std::max(0.0, v * T + v * dv / (2.0 * std::sqrt(a * b)));
  return a * (1.0 - std::pow(v / v0, 4.0) - (s_star / gap) * (s_star / gap));
}

/// Tractive power per unit mass, built from its physical terms: rolling
/// resistance, grade, inertia (with rotating-mass factor) and aerodynamic drag.
inline double vsp(double v, double a, double grade) {
  const double rolling = 0.132 * v;
  const double slope = 9.81 * grade * v;
  const double inertia = 1.1 * a * v;
  const double aero = 0.000302 * v * v * v;
  return rolling + slope + inertia + aero;
}

}  // namespace oracle
