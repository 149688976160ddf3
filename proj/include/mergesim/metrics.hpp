#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mergesim/engine.hpp"
#include "mergesim/errors.hpp"
#include "mergesim/geometry.hpp"

namespace mergesim {

/// Vehicle specific power in kW/tonne, light-duty coefficients.
inline double vsp(double speed, double accel, double grade) {
  return speed * (1.1 * accel + 9.81 * grade + 0.132) + 0.000302 * speed * speed * speed;
}

enum Species { kHC = 0, kCO = 1, kCO2 = 2, kNOx = 3 };
inline constexpr std::array<const char*, 4> kSpeciesNames{"HC", "CO", "CO2", "NOx"};

/// Emission rates in g/s keyed by VSP bin. Bin i covers [edges[i-1], edges[i]);
/// bin 0 is everything below edges[0] and the last bin everything above.
/// The numbers are a coarse light-duty surrogate; only ratios between runs
/// are meaningful.
struct RateTable {
  std::vector<double> edges;
  std::array<std::vector<double>, 4> rates;

  std::size_t bin(double v) const {
    return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
  }
};

inline const RateTable& default_rate_table() {
  static const RateTable table{
      {0.0, 3.0, 6.0, 9.0, 12.0, 18.0, 24.0, 30.0},
      {{
          {0.00008, 0.00010, 0.00013, 0.00016, 0.0002, 0.00028, 0.0005, 0.0009, 0.002},
          {0.004, 0.006, 0.009, 0.012, 0.016, 0.025, 0.05, 0.11, 0.30},
          {1.2, 2.0, 2.9, 3.7, 4.5, 5.6, 7.2, 8.6, 10.5},
          {0.0002, 0.0003, 0.0005, 0.0007, 0.0009, 0.0013, 0.0022, 0.0035, 0.006},
      }}};
  return table;
}

struct MetricsRecord {
  VehicleId vehicle_id{};
  double travel_time{};
  double energy{};  // kJ
  std::array<double, 4> emissions{};  // g, indexed by Species
};

struct Sample {
  double t{};
  double station{};
  double speed{};
  double accel{};
  double grade{};
};

/// Control-tick samples of one vehicle, in time order.
inline std::vector<Sample> samples_for(const std::vector<TrajectoryRecord>& log, VehicleId id,
                                       const RoadNetwork* net = nullptr) {
  std::vector<Sample> out;
  for (const auto& r : log) {
    if (r.id != id) continue;
    const double grade = net ? net->get(r.path_id).grade() : 0.0;
    out.push_back({r.t, r.station, r.speed, r.accel, grade});
  }
  return out;
}

/// Time at which the station first reaches `station`, interpolated linearly
/// between samples.
inline double crossing_time(const std::vector<Sample>& s, double station) {
  if (s.empty()) throw IncompleteTraversal("no samples");
  if (s.front().station >= station) return s.front().t;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i].station >= station) {
      const double f = (station - s[i - 1].station) / (s[i].station - s[i - 1].station);
      return s[i - 1].t + f * (s[i].t - s[i - 1].t);
    }
  }
  throw IncompleteTraversal("station " + std::to_string(station) + " never reached");
}

inline double travel_time(const std::vector<Sample>& s, const MeasurementWindow& w) {
  return crossing_time(s, w.end) - crossing_time(s, w.start);
}

namespace detail {

inline Sample lerp(const Sample& a, const Sample& b, double t) {
  if (b.t == a.t) return a;
  const double f = (t - a.t) / (b.t - a.t);
  return {t, a.station + f * (b.station - a.station), a.speed + f * (b.speed - a.speed),
          a.accel + f * (b.accel - a.accel), a.grade};
}

/// Samples restricted to [t0, t1] with interpolated end points.
inline std::vector<Sample> clip(const std::vector<Sample>& s, double t0, double t1) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].t < t0) {
      if (i + 1 < s.size() && s[i + 1].t > t0) out.push_back(lerp(s[i], s[i + 1], t0));
      continue;
    }
    if (s[i].t > t1) {
      if (i > 0 && s[i - 1].t < t1) out.push_back(lerp(s[i - 1], s[i], t1));
      break;
    }
    out.push_back(s[i]);
  }
  return out;
}

}  // namespace detail

/// Travel time, energy and emissions over the vehicle's measurement window.
/// Energy integrates positive VSP times mass with the trapezoidal rule;
/// emissions hold each sample's bin rate until the next sample.
inline MetricsRecord energy_emissions(const std::vector<Sample>& s, const MeasurementWindow& w,
                                      double mass, const RateTable& table = default_rate_table()) {
  MetricsRecord rec;
  const double t0 = crossing_time(s, w.start);
  const double t1 = crossing_time(s, w.end);
  rec.travel_time = t1 - t0;
  const auto c = detail::clip(s, t0, t1);
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    const double dt = c[i + 1].t - c[i].t;
    const double p0 = std::max(0.0, vsp(c[i].speed, c[i].accel, c[i].grade));
    const double p1 = std::max(0.0, vsp(c[i + 1].speed, c[i + 1].accel, c[i + 1].grade));
    rec.energy += 0.5 * (p0 + p1) * mass * dt;
    const std::size_t b = table.bin(vsp(c[i].speed, c[i].accel, c[i].grade));
    for (std::size_t k = 0; k < 4; ++k) rec.emissions[k] += table.rates[k][b] * dt;
  }
  return rec;
}

struct RunMetrics {
  std::vector<MetricsRecord> vehicles;

  MetricsRecord totals() const {
    MetricsRecord t;
    t.vehicle_id = 0;
    for (const auto& v : vehicles) {
      t.travel_time += v.travel_time;
      t.energy += v.energy;
      for (std::size_t k = 0; k < 4; ++k) t.emissions[k] += v.emissions[k];
    }
    return t;
  }
};

inline RunMetrics compute_run_metrics(const std::vector<TrajectoryRecord>& log,
                                      const std::map<VehicleId, MeasurementWindow>& windows,
                                      const RoadNetwork& net, double mass,
                                      const RateTable& table = default_rate_table()) {
  RunMetrics m;
  for (const auto& [id, w] : windows) {
    auto rec = energy_emissions(samples_for(log, id, &net), w, mass, table);
    rec.vehicle_id = id;
    m.vehicles.push_back(rec);
  }
  return m;
}

inline constexpr std::array<const char*, 6> kColumns{"travel_time_s", "energy_kJ", "HC_g",
                                                     "CO_g",          "CO2_g",     "NOx_g"};

inline std::array<double, 6> columns(const MetricsRecord& r) {
  return {r.travel_time, r.energy, r.emissions[kHC], r.emissions[kCO], r.emissions[kCO2],
          r.emissions[kNOx]};
}

struct ComparisonReport {
  std::array<double, 6> cooperative{};
  std::array<double, 6> baseline{};
  std::array<double, 6> reduction_pct{};
  std::size_t baseline_runs{};
  std::size_t vehicles{};
};

inline double reduction_percent(double baseline, double coop) {
  if (baseline == 0.0) return 0.0;
  return (baseline - coop) / baseline * 100.0;
}

/// Cooperative sums against the mean of the baseline runs' sums.
inline ComparisonReport compare(const RunMetrics& coop, const std::vector<RunMetrics>& baselines) {
  if (baselines.empty()) throw RosterMismatch("no baseline runs");
  auto ids = [](const RunMetrics& m) {
    std::vector<VehicleId> v;
    for (const auto& r : m.vehicles) v.push_back(r.vehicle_id);
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto roster = ids(coop);
  ComparisonReport rep;
  rep.vehicles = roster.size();
  rep.baseline_runs = baselines.size();
  rep.cooperative = columns(coop.totals());
  for (std::size_t i = 0; i < baselines.size(); ++i) {
    if (ids(baselines[i]) != roster) {
      throw RosterMismatch("baseline run " + std::to_string(i) + " has " +
                           std::to_string(baselines[i].vehicles.size()) + " vehicles, expected " +
                           std::to_string(roster.size()));
    }
    const auto c = columns(baselines[i].totals());
    for (std::size_t k = 0; k < 6; ++k) rep.baseline[k] += c[k] / static_cast<double>(baselines.size());
  }
  for (std::size_t k = 0; k < 6; ++k)
    rep.reduction_pct[k] = reduction_percent(rep.baseline[k], rep.cooperative[k]);
  return rep;
}

inline nlohmann::json to_json(const MetricsRecord& r) {
  nlohmann::json em = nlohmann::json::object();
  for (std::size_t k = 0; k < 4; ++k) em[kSpeciesNames[k]] = r.emissions[k];
  return {{"id", r.vehicle_id}, {"travel_time_s", r.travel_time}, {"energy_kJ", r.energy},
          {"emissions_g", em}};
}

inline nlohmann::json to_json(const RunMetrics& m) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : m.vehicles) list.push_back(to_json(r));
  auto t = to_json(m.totals());
  t.erase("id");
  return {{"vehicles", list}, {"totals", t}};
}

inline RunMetrics run_metrics_from_json(const nlohmann::json& j) {
  RunMetrics m;
  try {
    for (const auto& v : j.at("vehicles")) {
      MetricsRecord r;
      r.vehicle_id = v.at("id").get<int>();
      r.travel_time = v.at("travel_time_s").get<double>();
      r.energy = v.at("energy_kJ").get<double>();
      for (std::size_t k = 0; k < 4; ++k)
        r.emissions[k] = v.at("emissions_g").at(kSpeciesNames[k]).get<double>();
      m.vehicles.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metrics document: ") + e.what());
  }
  return m;
}

inline nlohmann::json to_json(const ComparisonReport& r) {
  auto row = [&](const std::array<double, 6>& a) {
    nlohmann::json o = nlohmann::json::object();
    for (std::size_t k = 0; k < 6; ++k) o[kColumns[k]] = a[k];
    return o;
  };
  return {{"rows",
           {{"cooperative", row(r.cooperative)},
            {"baseline", row(r.baseline)},
            {"reduction_pct", row(r.reduction_pct)}}},
          {"aggregation",
           {{"cooperative", "sum over vehicles"},
            {"baseline", "mean over runs of the sum over vehicles"}}},
          {"baseline_runs", r.baseline_runs},
          {"vehicles", r.vehicles}};
}

/// Fixed-width text table with one row per scenario and one for reductions.
inline std::string render_table(const ComparisonReport& r) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %14s %14s %12s %12s %14s %12s\n", "", "travel_time_s",
                "energy_kJ", "HC_g", "CO_g", "CO2_g", "NOx_g");
  out += buf;
  auto row = [&](const char* name, const std::array<double, 6>& a, const char* fmt) {
    std::snprintf(buf, sizeof buf, fmt, name, a[0], a[1], a[2], a[3], a[4], a[5]);
    out += buf;
  };
  row("cooperative", r.cooperative, "%-14s %14.3f %14.3f %12.5f %12.4f %14.3f %12.5f\n");
  row("baseline", r.baseline, "%-14s %14.3f %14.3f %12.5f %12.4f %14.3f %12.5f\n");
  row("reduction_%", r.reduction_pct, "%-14s %14.2f %14.2f %12.2f %12.2f %14.2f %12.2f\n");
  return out;
}

}  // namespace mergesim
