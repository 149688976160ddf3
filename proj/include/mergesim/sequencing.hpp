#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mergesim/errors.hpp"
#include "mergesim/types.hpp"
#include "mergesim/v2x.hpp"

namespace mergesim {

struct SequencingParams {
  double v_lim{30.0};
  double a_max{2.5};
  double t_head_safe{1.0};
  double sort_period{5.0};
  double horizon{60.0};
  double tie_epsilon{0.05};
  double highway_default_speed{30.0};
  double ramp_default_speed{5.0};
};

/// Which quantity bounds the merge speed.
enum class Regime { highway_average, ramp_max };

inline std::string_view to_string(Regime r) {
  return r == Regime::highway_average ? "highway-average" : "ramp-max";
}

struct MergePlan {
  double v_hs_avg{};
  double v_rs_avg{};
  double v_rm_max{};
  double v_m{};
  Regime regime{Regime::highway_average};
};

inline double accel_distance(double v_from, double v_to, double a_max) {
  if (v_to < v_from || v_from < 0.0) {
    throw InvalidSpeeds("cannot accelerate from " + std::to_string(v_from) + " to " +
                        std::to_string(v_to));
  }
  if (!(a_max > 0.0)) throw InvalidSpeeds("a_max must be positive");
  return (v_to * v_to - v_from * v_from) / (2.0 * a_max);
}

/// Top speed the ramp approach can reach by the merge point. Reaching v_lim
/// needs s_acc <= s_r; otherwise the vehicle accelerates over the whole ramp.
inline double max_reachable_speed(double v_rs_avg, double s_r, double v_lim, double a_max) {
  if (v_rs_avg >= v_lim) return v_lim;
  if (accel_distance(v_rs_avg, v_lim, a_max) <= s_r) return v_lim;
  return std::min(v_lim, std::sqrt(v_rs_avg * v_rs_avg + 2.0 * a_max * s_r));
}

inline double merge_speed(double v_rm_max, double v_hs_avg) { return std::min(v_rm_max, v_hs_avg); }

inline MergePlan plan_merge(double v_hs_avg, double v_rs_avg, double s_r,
                            const SequencingParams& p) {
  MergePlan plan;
  plan.v_hs_avg = std::min(v_hs_avg, p.v_lim);
  plan.v_rs_avg = v_rs_avg;
  plan.v_rm_max = max_reachable_speed(v_rs_avg, s_r, p.v_lim, p.a_max);
  plan.v_m = merge_speed(plan.v_rm_max, plan.v_hs_avg);
  plan.regime = plan.v_hs_avg <= plan.v_rm_max ? Regime::highway_average : Regime::ramp_max;
  return plan;
}

/// Time to cover s starting at speed v while moving toward target speed V at
/// rate a, then cruising at V. If s runs out before V is reached, the time is
/// that of the constant-acceleration segment alone.
inline double adjust_then_cruise(double v, double V, double s, double a) {
  if (v == V) return s / V;
  const double dv = V - v;
  const double d_adj = (V * V - v * v) / (2.0 * a) * (dv > 0 ? 1.0 : -1.0);
  if (d_adj <= s) {
    return s / V + dv * std::abs(dv) / (2.0 * a * V);
  }
  if (dv > 0) return (-v + std::sqrt(v * v + 2.0 * a * s)) / a;
  return (v - std::sqrt(std::max(0.0, v * v - 2.0 * a * s))) / a;
}

/// Seconds from registration until the highway vehicle reaches the merge point.
inline double eta_highway(double v_hs_i, double s_h, const MergePlan& plan,
                          const SequencingParams& p) {
  if (!(v_hs_i > 0.0)) {
    throw NonPositiveSpeed("highway entry speed must be positive, got " + std::to_string(v_hs_i));
  }
  if (!(s_h > 0.0)) throw InvalidSpeeds("s_h must be positive");
  const double v = std::min(v_hs_i, p.v_lim);
  if (plan.regime == Regime::highway_average) return s_h / v;
  return adjust_then_cruise(v, plan.v_m, s_h, p.a_max);
}

/// Seconds from registration until the ramp vehicle reaches the merge point.
inline double eta_ramp(double v_rs_j, double s_r, const MergePlan& plan,
                       const SequencingParams& p) {
  if (!(s_r > 0.0)) throw InvalidSpeeds("s_r must be positive");
  if (v_rs_j < 0.0) throw InvalidSpeeds("ramp entry speed must be non-negative");
  const double v = std::min(v_rs_j, p.v_lim);
  if (plan.regime == Regime::highway_average) return adjust_then_cruise(v, plan.v_m, s_r, p.a_max);
  return adjust_then_cruise(v, p.v_lim, s_r, p.a_max);
}

struct EtaEstimate {
  VehicleId vehicle_id{};
  double raw_eta{};
  double adjusted_eta{};
  VehicleClass approach{VehicleClass::highway};
  double registration_time{};
  double entry_station{};
};

struct SequenceAssignment {
  VehicleId vehicle_id{};
  int sequence_number{};
  std::optional<VehicleId> predecessor_id{};
};

struct SortResult {
  std::vector<EtaEstimate> estimates;  // in sequence order
  std::vector<SequenceAssignment> assignments;
};

namespace detail {

// Vehicles registered earlier are physically ahead on the same approach.
inline bool ahead_of(const EtaEstimate& a, const EtaEstimate& b) {
  if (a.registration_time != b.registration_time) return a.registration_time < b.registration_time;
  if (a.entry_station != b.entry_station) return a.entry_station > b.entry_station;
  return a.vehicle_id < b.vehicle_id;
}

}  // namespace detail

/// Applies the headway rules to a fresh batch and numbers it after the
/// existing assignments. `existing` carries already-sequenced vehicles (with
/// their adjusted ETAs) so that same-lane spacing holds across batches; they
/// are never renumbered.
inline SortResult adjust_and_sort(std::vector<EtaEstimate> batch,
                                  const std::vector<EtaEstimate>& existing,
                                  const std::vector<SequenceAssignment>& existing_assignments,
                                  const SequencingParams& p) {
  for (auto& e : batch) e.adjusted_eta = std::max(e.adjusted_eta, e.raw_eta);

  // Same-approach chains, front to back, mixing existing and new vehicles.
  struct Link {
    bool fresh;
    std::size_t index;
  };
  auto chain_for = [&](VehicleClass c) {
    std::vector<Link> chain;
    for (std::size_t i = 0; i < existing.size(); ++i)
      if (existing[i].approach == c) chain.push_back({false, i});
    for (std::size_t i = 0; i < batch.size(); ++i)
      if (batch[i].approach == c) chain.push_back({true, i});
    std::sort(chain.begin(), chain.end(), [&](const Link& a, const Link& b) {
      const auto& ea = a.fresh ? batch[a.index] : existing[a.index];
      const auto& eb = b.fresh ? batch[b.index] : existing[b.index];
      return detail::ahead_of(ea, eb);
    });
    return chain;
  };
  const auto highway_chain = chain_for(VehicleClass::highway);
  const auto ramp_chain = chain_for(VehicleClass::ramp);

  auto same_lane_pass = [&](const std::vector<Link>& chain) {
    bool changed = false;
    for (std::size_t k = 1; k < chain.size(); ++k) {
      if (!chain[k].fresh) continue;
      const auto& prev = chain[k - 1].fresh ? batch[chain[k - 1].index] : existing[chain[k - 1].index];
      auto& cur = batch[chain[k].index];
      const double floor = prev.adjusted_eta + p.t_head_safe;
      if (cur.adjusted_eta < floor) {
        cur.adjusted_eta = floor;
        changed = true;
      }
    }
    return changed;
  };

  auto cross_lane_pass = [&] {
    bool changed = false;
    for (auto& r : batch) {
      if (r.approach != VehicleClass::ramp) continue;
      auto check = [&](const EtaEstimate& h) {
        if (h.approach == VehicleClass::highway &&
            std::abs(h.adjusted_eta - r.adjusted_eta) < p.tie_epsilon) {
          r.adjusted_eta = h.adjusted_eta + p.t_head_safe;
          changed = true;
          return true;
        }
        return false;
      };
      bool bumped = true;
      while (bumped) {
        bumped = false;
        for (const auto& h : batch) bumped = bumped || check(h);
        for (const auto& h : existing) bumped = bumped || check(h);
      }
    }
    return changed;
  };

  for (int guard = 0; guard < 1000; ++guard) {
    bool changed = same_lane_pass(highway_chain);
    changed = same_lane_pass(ramp_chain) || changed;
    changed = cross_lane_pass() || changed;
    if (!changed) break;
  }

  std::stable_sort(batch.begin(), batch.end(), [](const EtaEstimate& a, const EtaEstimate& b) {
    if (a.adjusted_eta != b.adjusted_eta) return a.adjusted_eta < b.adjusted_eta;
    if (a.approach != b.approach) return a.approach == VehicleClass::highway;
    return detail::ahead_of(a, b);
  });

  int next = 1;
  std::optional<VehicleId> prev;
  for (const auto& a : existing_assignments) {
    if (a.sequence_number >= next) {
      next = a.sequence_number + 1;
      prev = a.vehicle_id;
    }
  }

  SortResult out;
  for (const auto& e : batch) {
    out.assignments.push_back({e.vehicle_id, next++, prev});
    prev = e.vehicle_id;
  }
  out.estimates = std::move(batch);
  return out;
}

struct SortTickResult {
  MergePlan plan;
  SortResult sorted;
};

/// One batch-sorting pass over the registry. Vehicles already holding a
/// number keep it; only unsequenced registered vehicles are estimated.
inline SortTickResult sort_tick(InfraRegistry& registry, double now, const SequencingParams& p,
                                double nominal_ramp_length) {
  SortTickResult res;
  const double v_hs_avg =
      rolling_average(registry.highway_window(), p.horizon, now, p.highway_default_speed);
  const double v_rs_avg =
      rolling_average(registry.ramp_window(), p.horizon, now, p.ramp_default_speed);

  // s_r for the regime choice: the ramp vehicles being sorted, else the
  // nominal ramp length.
  double s_r = 0.0;
  int n_ramp = 0;
  for (const auto& [id, rec] : registry.records()) {
    if (rec.cls == VehicleClass::ramp && !registry.sequence_of(id)) {
      s_r += rec.entry_distance_to_merge;
      ++n_ramp;
    }
  }
  s_r = n_ramp > 0 ? s_r / n_ramp : nominal_ramp_length;
  res.plan = plan_merge(v_hs_avg, v_rs_avg, std::max(s_r, 1e-9), p);

  std::vector<EtaEstimate> batch;
  std::vector<EtaEstimate> existing;
  std::vector<SequenceAssignment> existing_assignments;
  for (const auto& [id, rec] : registry.records()) {
    EtaEstimate e;
    e.vehicle_id = id;
    e.approach = rec.cls;
    e.registration_time = rec.registration_time;
    e.entry_station = rec.entry_station;
    if (auto seq = registry.sequence_table().find(id); seq != registry.sequence_table().end()) {
      e.raw_eta = seq->second.raw_eta;
      e.adjusted_eta = seq->second.adjusted_eta;
      existing.push_back(e);
      existing_assignments.push_back({id, seq->second.number, std::nullopt});
      continue;
    }
    // A vehicle registered at or past the merge point has no ETA to give.
    const double dist = std::max(rec.entry_distance_to_merge, 1e-6);
    const double tta = rec.cls == VehicleClass::highway
                           ? eta_highway(std::max(rec.entry_speed, 1e-3), dist, res.plan, p)
                           : eta_ramp(rec.entry_speed, dist, res.plan, p);
    e.raw_eta = rec.registration_time + tta;
    e.adjusted_eta = e.raw_eta;
    batch.push_back(e);
  }
  // Highest issued number may belong to an exited vehicle; numbering still
  // continues after it.
  if (registry.next_sequence() > 1) {
    existing_assignments.push_back({-1, registry.next_sequence() - 1, std::nullopt});
  }

  res.sorted = adjust_and_sort(std::move(batch), existing, existing_assignments, p);
  for (std::size_t i = 0; i < res.sorted.assignments.size(); ++i) {
    const auto& a = res.sorted.assignments[i];
    const auto& e = res.sorted.estimates[i];
    registry.assign(a.vehicle_id, {a.sequence_number, e.adjusted_eta, e.raw_eta});
  }
  for (auto& a : res.sorted.assignments) a.predecessor_id = registry.predecessor_of(a.vehicle_id);
  return res;
}

}  // namespace mergesim
