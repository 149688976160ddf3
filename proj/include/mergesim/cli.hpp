#pragma once

// Command implementations behind the mergesim executable. Argument parsing
// lives in tools/; everything here takes plain option structs so tests can
// drive the commands directly.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mergesim/engine.hpp"
#include "mergesim/errors.hpp"
#include "mergesim/metrics.hpp"
#include "mergesim/scenario.hpp"
#include "mergesim/trajectory_io.hpp"

namespace mergesim::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kValidation = 2, kSafety = 3, kIo = 4 };

inline constexpr const char* kOutDirEnv = "MERGESIM_OUT_DIR";

inline fs::path default_out_dir() {
  if (const char* v = std::getenv(kOutDirEnv); v && *v) return v;
  return "out";
}

/// "7" or "1..20" (inclusive).
inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  auto number = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw ValidationError("seed", "'" + text + "' is not a seed or seed range");
    return std::stoull(s);
  };
  const auto dots = text.find("..");
  if (dots == std::string::npos) return {number(text)};
  const auto lo = number(text.substr(0, dots));
  const auto hi = number(text.substr(dots + 2));
  if (hi < lo) throw ValidationError("seed", "empty range " + text);
  std::vector<std::uint64_t> out;
  for (auto s = lo; s <= hi; ++s) out.push_back(s);
  return out;
}

struct RunOptions {
  std::optional<fs::path> scenario{};
  std::optional<std::string> mode{};
  std::string seeds{"1"};
  std::optional<fs::path> out{};
  std::vector<std::string> overrides{};
};

/// Scenario document from a file (or the defaults) with mode, seed and
/// overrides applied, in that order.
inline Scenario resolve_scenario(const RunOptions& o, std::uint64_t seed) {
  nlohmann::json doc = o.scenario ? read_json_file(*o.scenario) : nlohmann::json::object();
  if (o.mode) doc["mode"] = *o.mode;
  doc["seed"] = seed;
  for (const auto& ov : o.overrides) apply_override(doc, ov);
  return load_scenario(doc, o.scenario ? o.scenario->parent_path() : fs::path{});
}

struct RunSummary {
  std::string status;  // complete | partial | safety_violation | controller_panic
  double end_time{};
  bool metrics_written{false};
  std::string message{};
};

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  f << text;
  if (!f) throw IoError("write failed for " + p.string());
}

/// Writes trajectory.csv, events.jsonl, run.json and, when every vehicle
/// finished its window, metrics.json.
inline RunSummary write_artifacts(const Engine& e, const fs::path& dir, RunSummary summary) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  {
    std::ofstream f(dir / "trajectory.csv", std::ios::binary);
    if (!f) throw IoError("cannot write " + (dir / "trajectory.csv").string());
    write_trajectory_csv(f, e.trajectory());
  }
  {
    std::ofstream f(dir / "events.jsonl", std::ios::binary);
    if (!f) throw IoError("cannot write " + (dir / "events.jsonl").string());
    write_events_jsonl(f, e.events());
  }
  summary.end_time = round_time(e.time());
  if (summary.status == "complete" && e.partial()) summary.status = "partial";
  if (summary.status == "complete" || summary.status == "partial") {
    try {
      const auto m = compute_run_metrics(e.trajectory(), e.windows(), e.network(), e.scenario().mass);
      write_text(dir / "metrics.json", to_json(m).dump(2) + "\n");
      summary.metrics_written = true;
    } catch (const IncompleteTraversal& ex) {
      summary.message = std::string("metrics skipped: ") + ex.what();
    }
  }
  nlohmann::json windows = nlohmann::json::object();
  for (const auto& [id, w] : e.windows()) windows[std::to_string(id)] = {w.start, w.end};
  nlohmann::json run = {{"status", summary.status},
                        {"partial", summary.status != "complete"},
                        {"end_time", summary.end_time},
                        {"seed", e.scenario().seed},
                        {"mode", std::string(to_string(e.scenario().mode))},
                        {"measurement_windows", windows},
                        {"window_anchor", "per-vehicle V2I registration point"},
                        {"scenario", to_json(e.scenario())}};
  if (e.scenario().geometry.source == "file") run["network"] = network_to_json(e.network());
  if (!summary.message.empty()) run["message"] = summary.message;
  write_text(dir / "run.json", run.dump(2) + "\n");
  return summary;
}

/// Runs one scenario to the end and writes its artifacts.
inline RunSummary run_to_dir(const Scenario& sc, const fs::path& dir) {
  Engine e(sc);
  RunSummary s{"complete"};
  try {
    e.run();
  } catch (const SafetyViolation& ex) {
    s.status = "safety_violation";
    s.message = ex.what();
  } catch (const ControllerPanic& ex) {
    s.status = "controller_panic";
    s.message = ex.what();
  }
  return write_artifacts(e, dir, s);
}

inline int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
  try {
    if (o.mode && !run_mode_from_string(*o.mode))
      throw ValidationError("mode", "unknown mode '" + *o.mode + "'");
    const auto seeds = parse_seeds(o.seeds);
    const fs::path root = o.out.value_or(default_out_dir());
    int code = kOk;
    for (const auto seed : seeds) {
      const Scenario sc = resolve_scenario(o, seed);
      if (sc.mode == RunMode::human)
        throw ValidationError("mode", "human mode needs a live driver; use serve --realtime");
      const fs::path dir = seeds.size() > 1 ? root / ("seed_" + std::to_string(seed)) : root;
      const auto s = run_to_dir(sc, dir);
      out << "seed " << seed << ": " << s.status << " at t=" << s.end_time << " -> " << dir.string()
          << "\n";
      if (!s.message.empty()) err << "seed " << seed << ": " << s.message << "\n";
      if (s.status == "safety_violation" || s.status == "controller_panic") code = kSafety;
    }
    return code;
  } catch (const ValidationError& ex) {
    err << "invalid scenario: " << ex.what() << "\n";
    return kValidation;
  } catch (const ParseError& ex) {
    err << "parse error: " << ex.what() << "\n";
    return kValidation;
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kIo;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kValidation;
  }
}

struct CompareOptions {
  fs::path coop;
  std::vector<fs::path> baselines;
  std::optional<fs::path> report{};  // structured copy; defaults next to the coop run
};

inline RunMetrics load_metrics(const fs::path& dir) {
  const auto p = dir / "metrics.json";
  if (!fs::exists(p)) throw IoError("no metrics.json in " + dir.string());
  return run_metrics_from_json(read_json_file(p));
}

/// A baseline argument is either a run directory or a batch directory whose
/// subdirectories are runs.
inline std::vector<fs::path> expand_runs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  if (fs::exists(dir / "metrics.json")) return {dir};
  std::vector<fs::path> runs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && fs::exists(entry.path() / "metrics.json")) runs.push_back(entry.path());
  std::sort(runs.begin(), runs.end());
  if (runs.empty()) throw IoError("no runs with metrics.json under " + dir.string());
  return runs;
}

inline int cmd_compare(const CompareOptions& o, std::ostream& out, std::ostream& err) {
  try {
    if (!fs::is_directory(o.coop)) throw IoError("not a directory: " + o.coop.string());
    const RunMetrics coop = load_metrics(o.coop);
    std::vector<fs::path> runs;
    for (const auto& b : o.baselines) {
      const auto r = expand_runs(b);
      runs.insert(runs.end(), r.begin(), r.end());
    }
    std::vector<RunMetrics> base;
    for (const auto& r : runs) base.push_back(load_metrics(r));
    ComparisonReport rep;
    try {
      rep = compare(coop, base);
    } catch (const RosterMismatch& ex) {
      // Name the offending run rather than its index.
      std::string msg = ex.what();
      for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto tag = "baseline run " + std::to_string(i) + " ";
        if (msg.rfind(tag, 0) == 0) msg = runs[i].string() + " " + msg.substr(tag.size());
      }
      err << "roster mismatch: " << msg << "\n";
      return kValidation;
    }
    out << render_table(rep);
    auto doc = to_json(rep);
    doc["coop_run"] = o.coop.string();
    doc["baseline_runs_paths"] = nlohmann::json::array();
    for (const auto& r : runs) doc["baseline_runs_paths"].push_back(r.string());
    const fs::path report = o.report.value_or(o.coop / "comparison.json");
    write_text(report, doc.dump(2) + "\n");
    out << "report written to " << report.string() << "\n";
    return kOk;
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kIo;
  } catch (const ParseError& ex) {
    err << "parse error: " << ex.what() << "\n";
    return kValidation;
  } catch (const fs::filesystem_error& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kIo;
  }
}

struct GeometryOptions {
  double ramp_length{267.0};
  std::optional<fs::path> out{};
};

/// Writes the generated road network as a path document usable with
/// geometry.source = "file".
inline int cmd_geometry(const GeometryOptions& o, std::ostream& out, std::ostream& err) {
  try {
    const auto doc = network_to_json(default_network(o.ramp_length)).dump(2) + "\n";
    if (o.out) {
      write_text(*o.out, doc);
    } else {
      out << doc;
    }
    return kOk;
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kIo;
  } catch (const Error& ex) {
    err << "invalid geometry: " << ex.what() << "\n";
    return kValidation;
  }
}

}  // namespace mergesim::cli
