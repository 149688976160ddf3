#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mergesim/control.hpp"
#include "mergesim/dynamics.hpp"
#include "mergesim/errors.hpp"
#include "mergesim/geometry.hpp"
#include "mergesim/sequencing.hpp"
#include "mergesim/v2x.hpp"

namespace mergesim {

using nlohmann::json;

enum class RunMode { coop, cautious, aggressive, human };

inline std::string_view to_string(RunMode m) {
  switch (m) {
    case RunMode::coop: return "coop";
    case RunMode::cautious: return "cautious";
    case RunMode::aggressive: return "aggressive";
    case RunMode::human: return "human";
  }
  return "?";
}

inline std::optional<RunMode> run_mode_from_string(std::string_view s) {
  if (s == "coop") return RunMode::coop;
  if (s == "cautious") return RunMode::cautious;
  if (s == "aggressive") return RunMode::aggressive;
  if (s == "human") return RunMode::human;
  return std::nullopt;
}

struct GeometrySpec {
  std::string source{"generated"};  // or "file"
  std::string file{};
  double ramp_length{267.0};
  double lateral_tolerance{kDefaultLateralTolerance};
};

struct RosterSpec {
  int highway_count{6};
  int ramp_count{1};
  double vehicle_length{kDefaultVehicleLength};
  double spacing_min{20.0};
  double spacing_max{35.0};
  double speed_min{27.0};
  double speed_max{30.0};
  // The string leader is placed so that it reaches the V2I range at this time.
  double highway_approach_time{40.6};
  double ramp_spawn_time{41.1};
  double ramp_spawn_interval{3.0};
};

inline std::array<AggressiveParams, 4> default_aggressive_profiles() {
  std::array<AggressiveParams, 4> p{};
  p[0] = {2.5, 30.0, 60.0, 0.5, 1.2, 4.0, 20.0};
  p[1] = {2.5, 32.0, 70.0, 0.4, 1.0, 4.0, 20.0};
  p[2] = {2.2, 29.0, 55.0, 0.6, 1.4, 4.0, 20.0};
  p[3] = {2.5, 31.0, 65.0, 0.5, 1.1, 4.0, 20.0};
  return p;
}

struct DriverSpec {
  std::optional<int> profile{};  // aggressive parameterization; derived from seed when unset
  CautiousParams cautious{};
  std::array<AggressiveParams, 4> aggressive_profiles{default_aggressive_profiles()};
  HumanParams human{};
  IdmParams follow{2.0, 2.0, 2.0, 1.2, 30.0};
  double reaction_time{1.2};
};

struct Scenario {
  std::uint64_t seed{1};
  RunMode mode{RunMode::coop};
  double duration{120.0};
  double measurement_distance{600.0};
  double dt{kDefaultDt};
  int control_every{5};
  double highway_desired_speed{30.0};
  double cacc_time_gap{0.5};
  double ramp_initial_speed{5.0};
  double t_head_v2v{0.5};  // carried for completeness; no logic reads it
  GeometrySpec geometry{};
  RosterSpec roster{};
  ActuationLimits limits{};
  ConsensusGains gains{};
  SequencingParams sequencing{};
  V2xParams v2x{};
  SupervisorParams supervisor{};
  IdmParams fallback{};
  CruiseParams cruise{};
  DriverSpec driver{};
  double mass{1.5};
  // Resolved network; filled by load_scenario / resolve_geometry.
  std::optional<RoadNetwork> network{};

  double control_period() const { return dt * control_every; }

  /// Aggressive parameterization used for this run: five seeds per profile,
  /// cycling through the four.
  int driver_profile() const {
    if (driver.profile) return *driver.profile;
    return static_cast<int>(((seed == 0 ? 0 : seed - 1) / 5) % 4);
  }

  ControllerConfig controller_config() const {
    ControllerConfig c;
    c.gains = gains;
    c.cruise = cruise;
    c.cruise.desired_speed = highway_desired_speed;
    c.cruise.time_gap = cacc_time_gap;
    c.supervisor = supervisor;
    c.fallback = fallback;
    c.limits = limits;
    return c;
  }

  DriverModel driver_model() const {
    DriverModel m;
    m.kind = mode == RunMode::cautious     ? DriverKind::cautious
             : mode == RunMode::aggressive ? DriverKind::aggressive
                                           : DriverKind::human;
    m.cautious = driver.cautious;
    m.aggressive = driver.aggressive_profiles.at(static_cast<std::size_t>(driver_profile()));
    m.human = driver.human;
    m.follow = driver.follow;
    m.reaction_time = driver.reaction_time;
    return m;
  }
};

// ---------------------------------------------------------------------------
// JSON encoding

inline json point_to_json(Point p) { return json::array({p.x, p.y}); }

inline json to_json(const AggressiveParams& p) {
  return {{"accel", p.accel},         {"target_speed", p.target_speed},
          {"sight_distance", p.sight_distance}, {"kp", p.kp},
          {"kd", p.kd},               {"max_brake", p.max_brake},
          {"trailing_spacing", p.trailing_spacing}};
}

inline json to_json(const IdmParams& p) {
  return {{"a_f", p.a_f}, {"b", p.b}, {"s0", p.s0}, {"T", p.T}, {"v0", p.v0}};
}

inline json to_json(const Scenario& s) {
  json aggressive = json::array();
  for (const auto& p : s.driver.aggressive_profiles) aggressive.push_back(to_json(p));
  json j = {
      {"seed", s.seed},
      {"mode", std::string(to_string(s.mode))},
      {"duration", s.duration},
      {"measurement_distance", s.measurement_distance},
      {"dt", s.dt},
      {"control_every", s.control_every},
      {"highway_desired_speed", s.highway_desired_speed},
      {"cacc_time_gap", s.cacc_time_gap},
      {"ramp_initial_speed", s.ramp_initial_speed},
      {"t_head_v2v", s.t_head_v2v},
      {"mass", s.mass},
      {"geometry",
       {{"source", s.geometry.source},
        {"file", s.geometry.file},
        {"ramp_length", s.geometry.ramp_length},
        {"lateral_tolerance", s.geometry.lateral_tolerance}}},
      {"roster",
       {{"highway_count", s.roster.highway_count},
        {"ramp_count", s.roster.ramp_count},
        {"vehicle_length", s.roster.vehicle_length},
        {"spacing_min", s.roster.spacing_min},
        {"spacing_max", s.roster.spacing_max},
        {"speed_min", s.roster.speed_min},
        {"speed_max", s.roster.speed_max},
        {"highway_approach_time", s.roster.highway_approach_time},
        {"ramp_spawn_time", s.roster.ramp_spawn_time},
        {"ramp_spawn_interval", s.roster.ramp_spawn_interval}}},
      {"limits", {{"a_max", s.limits.a_max}, {"a_min", s.limits.a_min}, {"jerk_max", nullptr}}},
      {"gains",
       {{"delta", s.gains.delta},
        {"gamma", s.gains.gamma},
        {"t_head_safe", s.gains.t_head_safe},
        {"s_head_safe", s.gains.s_head_safe},
        {"s_standstill", s.gains.s_standstill}}},
      {"sequencing",
       {{"v_lim", s.sequencing.v_lim},
        {"a_max", s.sequencing.a_max},
        {"t_head_safe", s.sequencing.t_head_safe},
        {"sort_period", s.sequencing.sort_period},
        {"horizon", s.sequencing.horizon},
        {"tie_epsilon", s.sequencing.tie_epsilon},
        {"highway_default_speed", s.sequencing.highway_default_speed},
        {"ramp_default_speed", s.sequencing.ramp_default_speed}}},
      {"v2x",
       {{"infra_position", point_to_json(s.v2x.infra_position)}, {"range", s.v2x.range}}},
      {"supervision",
       {{"ttc_bound", s.supervisor.ttc_bound},
        {"hysteresis", s.supervisor.hysteresis},
        {"radar_range", s.supervisor.radar_range}}},
      {"fallback", to_json(s.fallback)},
      {"cruise", {{"speed_gain", s.cruise.speed_gain}, {"overspeed", s.cruise.overspeed}}},
      {"driver",
       {{"profile", s.driver.profile ? json(*s.driver.profile) : json(nullptr)},
        {"cautious",
         {{"accel", s.driver.cautious.accel}, {"target_speed", s.driver.cautious.target_speed}}},
        {"aggressive_profiles", aggressive},
        {"human",
         {{"a_drive_max", s.driver.human.a_drive_max},
          {"b_brake_max", s.driver.human.b_brake_max}}},
        {"follow", to_json(s.driver.follow)},
        {"reaction_time", s.driver.reaction_time}}},
  };
  if (s.limits.jerk_max) j["limits"]["jerk_max"] = *s.limits.jerk_max;
  return j;
}

// ---------------------------------------------------------------------------
// Decoding

namespace detail {

inline std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

/// Overlays `user` on `base`, rejecting keys that `base` does not define.
/// Arrays of objects are replaced element-wise with the same key check
/// against the first default element.
inline void merge_checked(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ValidationError(path.empty() ? "<root>" : path, "expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string field = join(path, it.key());
    if (!base.contains(it.key())) throw ValidationError(field, "unknown key");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), field);
    } else if (slot.is_array() && !slot.empty() && slot.front().is_object()) {
      if (!it.value().is_array()) throw ValidationError(field, "expected an array");
      json merged = json::array();
      for (std::size_t i = 0; i < it.value().size(); ++i) {
        json elem = i < slot.size() ? slot[i] : slot.front();
        merge_checked(elem, it.value()[i], field + "[" + std::to_string(i) + "]");
        merged.push_back(elem);
      }
      slot = merged;
    } else {
      slot = it.value();
    }
  }
}

class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& at(const std::string& dotted) const {
    const json* cur = &root_;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) cur = &(*cur)[part];
    return *cur;
  }

  double num(const std::string& f) const {
    const json& v = at(f);
    if (!v.is_number()) throw ValidationError(f, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ValidationError(f, "must be finite");
    return d;
  }
  double positive(const std::string& f) const {
    const double d = num(f);
    if (!(d > 0.0)) throw ValidationError(f, "must be positive");
    return d;
  }
  double non_negative(const std::string& f) const {
    const double d = num(f);
    if (d < 0.0) throw ValidationError(f, "must be non-negative");
    return d;
  }
  int integer(const std::string& f, int lo) const {
    const json& v = at(f);
    if (!v.is_number_integer()) throw ValidationError(f, "expected an integer");
    const auto i = v.get<long long>();
    if (i < lo) throw ValidationError(f, "must be at least " + std::to_string(lo));
    return static_cast<int>(i);
  }
  std::string str(const std::string& f) const {
    const json& v = at(f);
    if (!v.is_string()) throw ValidationError(f, "expected a string");
    return v.get<std::string>();
  }
  Point point(const std::string& f) const {
    const json& v = at(f);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw ValidationError(f, "expected [x, y]");
    return {v[0].get<double>(), v[1].get<double>()};
  }

 private:
  const json& root_;
};

inline IdmParams read_idm(const Reader& r, const std::string& p) {
  return {r.positive(p + ".a_f"), r.positive(p + ".b"), r.non_negative(p + ".s0"),
          r.non_negative(p + ".T"), r.positive(p + ".v0")};
}

}  // namespace detail

inline RoadNetwork network_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("paths") || !doc["paths"].is_array())
    throw ParseError("path document needs a 'paths' array");
  RoadNetwork net;
  for (std::size_t i = 0; i < doc["paths"].size(); ++i) {
    const json& p = doc["paths"][i];
    const std::string f = "paths[" + std::to_string(i) + "]";
    try {
      const auto kind = path_kind_from_string(p.at("kind").get<std::string>());
      if (!kind) throw ValidationError(f + ".kind", "must be highway-lane or on-ramp");
      std::vector<Point> pts;
      for (const auto& w : p.at("waypoints")) pts.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
      const auto& mp = p.at("merge_point");
      const double grade = p.contains("grade") ? p["grade"].get<double>() : 0.0;
      net.paths.push_back(PathGeometry::build(p.at("id").get<std::string>(), std::move(pts),
                                              {mp.at(0).get<double>(), mp.at(1).get<double>()},
                                              *kind, grade));
    } catch (const json::exception& e) {
      throw ParseError(f + ": " + e.what());
    }
  }
  int hw = 0, rp = 0;
  for (const auto& p : net.paths) (p.kind() == PathKind::highway_lane ? hw : rp)++;
  if (hw != 1 || rp != 1)
    throw ValidationError("paths", "need exactly one highway-lane and one on-ramp path");
  return net;
}

inline json network_to_json(const RoadNetwork& net) {
  json paths = json::array();
  for (const auto& p : net.paths) {
    json wps = json::array();
    for (const auto& w : p.waypoints()) wps.push_back(point_to_json(w));
    const Point mp = point_at_station(p, Station{0.0});
    paths.push_back({{"id", p.id()},
                     {"kind", std::string(to_string(p.kind()))},
                     {"waypoints", wps},
                     {"merge_point", point_to_json(mp)},
                     {"grade", p.grade()}});
  }
  return {{"paths", paths}};
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

/// Sets a dotted key inside a document, creating intermediate objects.
/// The value text is parsed as JSON when possible, else taken as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ValidationError(assignment, "override must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* cur = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& next = (*cur)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ValidationError(key, "'" + parts[i] + "' is not an object");
    cur = &next;
  }
  (*cur)[parts.back()] = value;
}

/// Resolves a scenario document over the defaults. Geometry files are looked
/// up relative to base_dir.
inline Scenario load_scenario(const json& user, const std::filesystem::path& base_dir = {}) {
  json doc = to_json(Scenario{});
  detail::merge_checked(doc, user.is_null() ? json::object() : user, "");
  const detail::Reader r(doc);

  Scenario s;
  {
    const json& seed = doc["seed"];
    if (!seed.is_number_integer() || seed.get<long long>() < 0)
      throw ValidationError("seed", "must be a non-negative integer");
    s.seed = seed.get<std::uint64_t>();
  }
  const auto mode = run_mode_from_string(r.str("mode"));
  if (!mode) throw ValidationError("mode", "must be coop, cautious, aggressive or human");
  s.mode = *mode;
  s.duration = r.positive("duration");
  s.measurement_distance = r.positive("measurement_distance");
  s.dt = r.positive("dt");
  s.control_every = r.integer("control_every", 1);
  s.highway_desired_speed = r.positive("highway_desired_speed");
  s.cacc_time_gap = r.positive("cacc_time_gap");
  s.ramp_initial_speed = r.non_negative("ramp_initial_speed");
  s.t_head_v2v = r.non_negative("t_head_v2v");
  s.mass = r.positive("mass");

  s.geometry.source = r.str("geometry.source");
  s.geometry.file = r.str("geometry.file");
  s.geometry.ramp_length = r.positive("geometry.ramp_length");
  s.geometry.lateral_tolerance = r.positive("geometry.lateral_tolerance");
  if (s.geometry.source != "generated" && s.geometry.source != "file")
    throw ValidationError("geometry.source", "must be generated or file");
  if (s.geometry.source == "file" && s.geometry.file.empty())
    throw ValidationError("geometry.file", "required when source is file");

  auto& ro = s.roster;
  ro.highway_count = r.integer("roster.highway_count", 0);
  ro.ramp_count = r.integer("roster.ramp_count", 0);
  ro.vehicle_length = r.positive("roster.vehicle_length");
  ro.spacing_min = r.positive("roster.spacing_min");
  ro.spacing_max = r.positive("roster.spacing_max");
  if (ro.spacing_max < ro.spacing_min)
    throw ValidationError("roster.spacing_max", "must be >= spacing_min");
  ro.speed_min = r.non_negative("roster.speed_min");
  ro.speed_max = r.non_negative("roster.speed_max");
  if (ro.speed_max < ro.speed_min) throw ValidationError("roster.speed_max", "must be >= speed_min");
  ro.highway_approach_time = r.non_negative("roster.highway_approach_time");
  ro.ramp_spawn_time = r.non_negative("roster.ramp_spawn_time");
  ro.ramp_spawn_interval = r.positive("roster.ramp_spawn_interval");

  s.limits.a_max = r.positive("limits.a_max");
  s.limits.a_min = r.num("limits.a_min");
  if (!(s.limits.a_min < 0.0)) throw ValidationError("limits.a_min", "must be negative");
  if (!doc["limits"]["jerk_max"].is_null()) s.limits.jerk_max = r.positive("limits.jerk_max");

  s.gains.delta = r.positive("gains.delta");
  s.gains.gamma = r.positive("gains.gamma");
  s.gains.t_head_safe = r.positive("gains.t_head_safe");
  s.gains.s_head_safe = r.positive("gains.s_head_safe");
  s.gains.s_standstill = r.non_negative("gains.s_standstill");

  auto& sq = s.sequencing;
  sq.v_lim = r.positive("sequencing.v_lim");
  sq.a_max = r.positive("sequencing.a_max");
  sq.t_head_safe = r.positive("sequencing.t_head_safe");
  sq.sort_period = r.positive("sequencing.sort_period");
  sq.horizon = r.positive("sequencing.horizon");
  sq.tie_epsilon = r.non_negative("sequencing.tie_epsilon");
  sq.highway_default_speed = r.positive("sequencing.highway_default_speed");
  sq.ramp_default_speed = r.non_negative("sequencing.ramp_default_speed");
  if (sq.sort_period + 1e-9 < s.control_period())
    throw ValidationError("sequencing.sort_period", "must be at least the control period");

  s.v2x.infra_position = r.point("v2x.infra_position");
  s.v2x.range = r.positive("v2x.range");

  s.supervisor.ttc_bound = r.positive("supervision.ttc_bound");
  s.supervisor.hysteresis = r.non_negative("supervision.hysteresis");
  s.supervisor.radar_range = r.positive("supervision.radar_range");
  s.fallback = detail::read_idm(r, "fallback");
  s.cruise.speed_gain = r.positive("cruise.speed_gain");
  s.cruise.overspeed = r.non_negative("cruise.overspeed");

  if (!doc["driver"]["profile"].is_null()) {
    const int p = r.integer("driver.profile", 0);
    if (p > 3) throw ValidationError("driver.profile", "must be 0..3");
    s.driver.profile = p;
  }
  s.driver.cautious = {r.positive("driver.cautious.accel"),
                       r.positive("driver.cautious.target_speed")};
  const json& ap = doc["driver"]["aggressive_profiles"];
  if (ap.size() != 4) throw ValidationError("driver.aggressive_profiles", "need exactly 4 entries");
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string f = "driver.aggressive_profiles[" + std::to_string(i) + "]";
    auto get = [&](const char* k, bool pos) {
      const json& v = ap[i][k];
      if (!v.is_number()) throw ValidationError(f + "." + k, "expected a number");
      const double d = v.get<double>();
      if (pos ? !(d > 0.0) : d < 0.0) throw ValidationError(f + "." + k, "out of range");
      return d;
    };
    s.driver.aggressive_profiles[i] = {get("accel", true), get("target_speed", true),
                                       get("sight_distance", true), get("kp", false),
                                       get("kd", false), get("max_brake", true),
                                       get("trailing_spacing", true)};
  }
  s.driver.human = {r.positive("driver.human.a_drive_max"), r.positive("driver.human.b_brake_max")};
  s.driver.follow = detail::read_idm(r, "driver.follow");
  s.driver.reaction_time = r.non_negative("driver.reaction_time");

  if (s.geometry.source == "generated") {
    s.network = default_network(s.geometry.ramp_length);
  } else {
    std::filesystem::path f = s.geometry.file;
    if (f.is_relative() && !base_dir.empty()) f = base_dir / f;
    s.network = network_from_json(read_json_file(f));
  }
  return s;
}

inline Scenario load_scenario_file(const std::filesystem::path& path,
                                   const std::vector<std::string>& overrides = {}) {
  json doc = read_json_file(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return load_scenario(doc, path.parent_path());
}

}  // namespace mergesim
