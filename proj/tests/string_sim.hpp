#pragma once

// Six-vehicle CACC string started with speed perturbations, stepped with the
// engine's cadence (0.02 s physics, 10 Hz control).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mergesim/control.hpp"
#include "mergesim/rng.hpp"

namespace string_sim {

struct Result {
  double settle_time{};  // last time any tolerance was violated
  bool fallback{false};
  double min_gap{1e9};
};

inline Result run(const mergesim::ControllerConfig& cfg, std::uint64_t seed, double horizon = 60.0,
                  double perturbation = 2.0) {
  using namespace mergesim;
  constexpr int kCars = 6;
  constexpr double dt = 0.02;
  Rng rng(seed);
  ConsensusGains g = cfg.gains;
  g.t_head_safe = cfg.cruise.time_gap;
  const double v_ref = cfg.cruise.desired_speed;
  const double spacing = desired_headway(v_ref, g) + kDefaultVehicleLength;
  std::vector<VehicleState> w;
  for (int i = 0; i < kCars; ++i) {
    VehicleState v;
    v.id = i + 1;
    v.path_id = "highway";
    v.station = -i * spacing;
    // Seed 0 is the alternating worst case.
    v.speed = v_ref + (seed == 0 ? (i % 2 ? perturbation : -perturbation)
                                 : rng.uniform(-perturbation, perturbation));
    w.push_back(v);
  }
  std::vector<ControllerMemory> mem(kCars);
  std::vector<double> cmd(kCars, 0.0);
  Result out;
  const long steps = std::lround(horizon / dt);
  for (long k = 0; k < steps; ++k) {
    if (k % 5 == 0) {
      for (int i = 0; i < kCars; ++i) {
        const auto o = controller_step(w[i], w, std::nullopt, cfg, mem[i]);
        cmd[i] = o.command.accel;
        mem[i] = o.memory;
        out.fallback = out.fallback || o.command.mode == ControlMode::fallback;
      }
    }
    for (int i = 0; i < kCars; ++i) w[i] = step_vehicle(w[i], cmd[i], cfg.limits, dt);
    const double t = (k + 1) * dt;
    bool ok = std::abs(w[0].speed - v_ref) <= 0.1;
    for (int i = 1; i < kCars; ++i) {
      const double gap = w[i - 1].station - w[i].station - kDefaultVehicleLength;
      out.min_gap = std::min(out.min_gap, gap);
      ok = ok && std::abs(w[i].speed - v_ref) <= 0.1 &&
           std::abs(gap - desired_headway(w[i].speed, g)) <= 0.5;
    }
    if (!ok) out.settle_time = t;
  }
  return out;
}

}  // namespace string_sim
