#include <iostream>

#include <CLI11.hpp>

#include "mergesim/bridge.hpp"
#include "mergesim/cli.hpp"

namespace {

void add_run_flags(CLI::App* cmd, mergesim::cli::RunOptions& o) {
  cmd->add_option("--scenario", o.scenario, "scenario JSON file (defaults when omitted)");
  cmd->add_option("--mode", o.mode, "coop | cautious | aggressive | human");
  cmd->add_option("--seed", o.seeds, "seed or inclusive range such as 1..20");
  cmd->add_option("--out", o.out, "output directory (default $MERGESIM_OUT_DIR or ./out)");
  cmd->add_option("--override", o.overrides, "dotted key=value applied to the scenario");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative on-ramp merging simulator"};
  app.require_subcommand(1);

  mergesim::cli::RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "run scenarios headless and write artifacts");
  add_run_flags(run_cmd, run);

  mergesim::cli::CompareOptions cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "compare a cooperative run against baselines");
  cmp_cmd->add_option("--coop", cmp.coop, "cooperative run directory")->required();
  cmp_cmd->add_option("--baseline", cmp.baselines, "baseline run or batch directories")->required();
  cmp_cmd->add_option("--report", cmp.report, "where to write the JSON report");

  mergesim::bridge::ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "run one scenario with the live bridge");
  add_run_flags(serve_cmd, serve.run);
  serve_cmd->add_option("--port", serve.port, "WebSocket port")->capture_default_str();
  serve_cmd->add_flag("--realtime", serve.realtime, "pace physics to the wall clock");
  serve_cmd->add_option("--speed", serve.speed, "pacing factor with --realtime")->capture_default_str();

  mergesim::cli::GeometryOptions geo;
  auto* geo_cmd = app.add_subcommand("geometry", "write the generated road network as a path file");
  geo_cmd->add_option("--ramp-length", geo.ramp_length, "ramp length in metres")->capture_default_str();
  geo_cmd->add_option("--out", geo.out, "output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mergesim::cli::kValidation;
  }

  if (*run_cmd) return mergesim::cli::cmd_run(run, std::cout, std::cerr);
  if (*cmp_cmd) return mergesim::cli::cmd_compare(cmp, std::cout, std::cerr);
  if (*serve_cmd) return mergesim::bridge::cmd_serve(serve, std::cout, std::cerr);
  return mergesim::cli::cmd_geometry(geo, std::cout, std::cerr);
}
