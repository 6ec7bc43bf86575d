/*
 * smdp — compositional finite-MDP abstraction, certification, synthesis and
 * validation for networks of stochastic switched systems.
 *
 * Usage: smdp <stage> --config <file> [overrides]
 * Stages: abstract | certify | compose | bound | synthesize | simulate |
 *         report | run
 */

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "smdp/pipeline.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::string out;
  double delta = -1.0;
  double eps = -1.0;
  int horizon = -1;
  std::int64_t seed = -1;
  unsigned threads = 0;
};

void add_common(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("-c,--config", ov.config_path, "project configuration JSON")
      ->required()
      ->envname("SMDP_CONFIG");
  cmd->add_option("--out", ov.out, "output directory override")->envname("SMDP_OUT");
  cmd->add_option("--delta", ov.delta, "state discretization override")->envname("SMDP_DELTA");
  cmd->add_option("--eps", ov.eps, "deviation level override")->envname("SMDP_EPS");
  cmd->add_option("--horizon", ov.horizon, "bound/synthesis/simulation horizon override")
      ->envname("SMDP_HORIZON");
  cmd->add_option("--seed", ov.seed, "simulation seed override")->envname("SMDP_SEED");
  cmd->add_option("--threads", ov.threads, "worker thread count (0 = hardware)")
      ->envname("SMDP_THREADS");
}

smdp::StageContext make_context(const Overrides& ov) {
  smdp::ProjectConfig cfg = smdp::ProjectConfig::load(ov.config_path);
  if (!ov.out.empty()) cfg.output_dir = ov.out;
  if (ov.delta > 0.0) cfg.grid.delta = ov.delta;
  if (ov.eps > 0.0) {
    cfg.bound.eps = ov.eps;
    cfg.simulation.eps = ov.eps;
  }
  if (ov.horizon >= 0) {
    cfg.bound.horizon = ov.horizon;
    cfg.synthesis.horizon = ov.horizon;
    cfg.simulation.horizon = ov.horizon;
  }
  if (ov.seed >= 0) cfg.simulation.seed = static_cast<std::uint64_t>(ov.seed);
  return smdp::StageContext::from_config(cfg, ov.threads);
}

int run_stage(const std::string& stage, const Overrides& ov) {
  try {
    auto ctx = make_context(ov);
    if (stage == "abstract") smdp::cmd_abstract(ctx);
    else if (stage == "certify") smdp::cmd_certify(ctx);
    else if (stage == "compose") smdp::cmd_compose(ctx);
    else if (stage == "bound") smdp::cmd_bound(ctx);
    else if (stage == "synthesize") smdp::cmd_synthesize(ctx);
    else if (stage == "simulate") smdp::cmd_simulate(ctx);
    else if (stage == "report") smdp::cmd_report(ctx);
    else if (stage == "run") smdp::cmd_run(ctx);
    return 0;
  } catch (const smdp::StageError& e) {
    nlohmann::json err{{"error", {{"stage", e.stage_name}, {"message", e.what()}}}};
    std::cerr << err.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", {{"stage", stage}, {"message", e.what()}}}};
    std::cerr << err.dump() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compositional finite-MDP abstractions of stochastic switched networks"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"abstract", "build the per-subsystem finite MDP kernels"},
      {"certify", "verify contraction certificates and derive simulation-function constants"},
      {"compose", "check the small-gain condition and compose the network certificate"},
      {"bound", "evaluate closeness guarantees and the memory tables"},
      {"synthesize", "robust dwell-time-respecting safety controller synthesis"},
      {"simulate", "paired Monte Carlo rollouts of network and abstraction"},
      {"report", "consolidate stage artifacts into report.json"},
      {"run", "all stages in order"}};
  std::map<std::string, Overrides> overrides;
  for (const auto& [name, desc] : stages) {
    auto* cmd = app.add_subcommand(name, desc);
    add_common(cmd, overrides[name]);
  }

  CLI11_PARSE(app, argc, argv);
  for (const auto& [name, desc] : stages)
    if (app.get_subcommand(name)->parsed()) return run_stage(name, overrides[name]);
  return 1;
}
