#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "dcnsim/experiment.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dcn::ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// Exit codes: 0 success, 1 bad configuration or I/O, 2 failed scenario
// check, 3 run finished but a balance bound or protocol property broke.
int main(int argc, char** argv) {
  CLI::App app{"Packet-level fat-tree network simulator with distributed flow scheduling"};

  std::string config_path;
  std::string scenario;
  dcn::ExperimentConfig cfg;

  app.add_option("--config", config_path, "JSON config file; explicit flags override its fields");
  auto* o_k = app.add_option("--k", cfg.k, "fabric arity: pods and ports per switch (even, >= 4)");
  auto* o_sched = app.add_option("--scheduler", cfg.scheduler, "difs | ecmp");
  auto* o_pat = app.add_option(
      "--pattern", cfg.pattern,
      "stride:<i> | stag:<Pe>:<Pp> | random | randx:<x> | randbij | shuffle:<bytes>");
  auto* o_dur = app.add_option("--duration", cfg.duration_s, "simulated seconds");
  auto* o_seed = app.add_option("--seed", cfg.seed, "random seed");
  auto* o_mode = app.add_option("--metric-mode", cfg.metric_mode, "count | rate");
  auto* o_delta = app.add_option("--delta", cfg.delta, "imbalance threshold (flows, or bps in rate mode)");
  auto* o_out = app.add_option("--out-dir", cfg.out_dir, "directory for summary.json and CSV outputs");
  auto* o_vb = app.add_flag("--validate-bounds", cfg.validate_bounds,
                            "sample steady-state balance margins and audit the bounds");
  app.add_option("--scenario", scenario, "local | remote1 | remote2: run a scripted collision drill");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) {
      dcn::ExperimentConfig file_cfg = dcn::ExperimentConfig::from_json_text(read_file(config_path));
      // Flags the user typed win over the file.
      if (o_k->count()) file_cfg.k = cfg.k;
      if (o_sched->count()) file_cfg.scheduler = cfg.scheduler;
      if (o_pat->count()) file_cfg.pattern = cfg.pattern;
      if (o_dur->count()) file_cfg.duration_s = cfg.duration_s;
      if (o_seed->count()) file_cfg.seed = cfg.seed;
      if (o_mode->count()) file_cfg.metric_mode = cfg.metric_mode;
      if (o_delta->count()) file_cfg.delta = cfg.delta;
      if (o_out->count()) file_cfg.out_dir = cfg.out_dir;
      if (o_vb->count()) file_cfg.validate_bounds = cfg.validate_bounds;
      cfg = file_cfg;
    }

    if (!scenario.empty()) {
      dcn::ScenarioResult res = dcn::scenario_check(scenario, cfg.seed);
      std::printf("%s: %s (%.2f s wall)\n%s\n", scenario.c_str(), res.pass ? "PASS" : "FAIL",
                  res.wall_seconds, res.detail.c_str());
      return res.pass ? 0 : 2;
    }

    cfg.validate();
    dcn::RunOutputs out = dcn::run_experiment(cfg);
    const dcn::MetricsReport& r = out.report;
    if (cfg.out_dir.empty()) {
      std::fputs(out.summary_json.c_str(), stdout);
    } else {
      std::printf("wrote %s/{summary.json,timeseries.csv,ear_log.csv,margins.csv,links.csv}\n",
                  cfg.out_dir.c_str());
    }
    std::printf("bisection %.3f Gbps, convergence %.2f s%s, ears %lld, wall %.1f s\n",
                r.bisection_bps / 1e9, dcn::to_seconds(r.convergence),
                r.converged ? "" : " (never held)", static_cast<long long>(r.ear_count),
                r.wall_seconds);
    if (!r.margin_violation.empty()) {
      std::fprintf(stderr, "balance bound violated:\n%s\n", r.margin_violation.c_str());
      return 3;
    }
    if (r.property_violations > 0) {
      std::fprintf(stderr, "protocol property violated: %s\n", r.property_detail.c_str());
      return 3;
    }
    return 0;
  } catch (const dcn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
