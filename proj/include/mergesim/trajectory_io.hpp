#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mergesim/engine.hpp"
#include "mergesim/errors.hpp"

namespace mergesim {

inline constexpr const char* kTrajectoryHeader = "t,id,path,station_m,speed_mps,accel_mps2,mode,seq,ttc_s";

inline std::string fixed6(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  // Avoid "-0.000000" so that equal logs print equally.
  if (std::string_view(buf) == "-0.000000") return "0.000000";
  return buf;
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRecord>& log) {
  os << kTrajectoryHeader << '\n';
  for (const auto& r : log) {
    os << fixed6(r.t) << ',' << r.id << ',' << r.path_id << ',' << fixed6(r.station) << ','
       << fixed6(r.speed) << ',' << fixed6(r.accel) << ',' << to_string(r.mode) << ',';
    if (r.seq) os << *r.seq;
    os << ',' << fixed6(r.ttc) << '\n';
  }
}

inline std::vector<TrajectoryRecord> read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTrajectoryHeader) {
    throw ParseError("trajectory log header mismatch");
  }
  std::vector<TrajectoryRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 9) throw ParseError("line " + std::to_string(lineno) + ": expected 9 fields");
    try {
      TrajectoryRecord r;
      r.t = std::stod(f[0]);
      r.id = std::stoi(f[1]);
      r.path_id = f[2];
      r.station = std::stod(f[3]);
      r.speed = std::stod(f[4]);
      r.accel = std::stod(f[5]);
      const auto mode = control_mode_from_string(f[6]);
      if (!mode) throw ParseError("line " + std::to_string(lineno) + ": bad mode '" + f[6] + "'");
      r.mode = *mode;
      if (!f[7].empty()) r.seq = std::stoi(f[7]);
      r.ttc = f[8] == "inf" ? kInf : std::stod(f[8]);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError("line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

/// Rounds to the microsecond so event times print like the trajectory log.
inline double round_time(double t) { return std::round(t * 1e6) / 1e6; }

inline nlohmann::json to_json(const Event& e) {
  nlohmann::json j = {{"t", round_time(e.t)}, {"kind", e.kind}};
  for (auto it = e.payload.begin(); it != e.payload.end(); ++it) j[it.key()] = it.value();
  return j;
}

inline void write_events_jsonl(std::ostream& os, const std::vector<Event>& events) {
  for (const auto& e : events) os << to_json(e).dump() << '\n';
}

}  // namespace mergesim
