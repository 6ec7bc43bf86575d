#include "smdp/pipeline.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "smdp/bounds.hpp"
#include "smdp/composition.hpp"
#include "smdp/fmdp.hpp"
#include "smdp/simulate.hpp"
#include "smdp/synthesis.hpp"

namespace smdp {

using nlohmann::json;

StageContext StageContext::from_config(const ProjectConfig& cfg, unsigned threads) {
  StageContext ctx;
  ctx.cfg = cfg;
  ctx.out = cfg.output_dir;
  ctx.threads = threads;
  return ctx;
}

std::filesystem::path abstraction_path(const StageContext& ctx, int subsystem) {
  return ctx.out / (ctx.cfg.homogeneous ? std::string("abstraction.fmdp")
                                        : "abstraction_" + std::to_string(subsystem) + ".fmdp");
}

std::filesystem::path certificate_path(const StageContext& ctx) {
  return ctx.out / "certificates.json";
}

std::filesystem::path composition_path(const StageContext& ctx) {
  return ctx.out / "composition.json";
}

std::filesystem::path policy_path(const StageContext& ctx, int subsystem) {
  return ctx.out / (ctx.cfg.homogeneous ? std::string("policy.bin")
                                        : "policy_" + std::to_string(subsystem) + ".bin");
}

void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os << content;
  }
  std::filesystem::rename(tmp, path);
}

namespace {

UniformGrid state_grid_for(const StageContext& ctx, int i) {
  return UniformGrid::with_target_diameter(ctx.cfg.network.subsystems[i].state_box,
                                           ctx.cfg.grid.delta_for(i));
}

UniformGrid input_grid_for(const StageContext& ctx, int i) {
  return UniformGrid::with_target_diameter(ctx.cfg.network.subsystems[i].input_box,
                                           ctx.cfg.grid.input_delta_for(i));
}

/* subsystems that actually need their own artifact */
std::vector<int> distinct_subsystems(const StageContext& ctx) {
  if (ctx.cfg.homogeneous) return {0};
  std::vector<int> all(ctx.cfg.network.size());
  for (int i = 0; i < ctx.cfg.network.size(); ++i) all[i] = i;
  return all;
}

SpsfCertificate certificate_from_config(const StageContext& ctx, int subsystem) {
  const auto& cc = ctx.cfg.certificates;
  const auto& spec = ctx.cfg.network.subsystems[subsystem];
  if (cc.source == "file") return load_certificate_json(cc.path);
  if (cc.source == "derive") {
    DeriveOptions opts;
    opts.epsilon = cc.epsilon;
    opts.dwell_time = cc.dwell_time ? cc.dwell_time : std::optional<int>(spec.dwell_time);
    opts.pi_tilde = cc.pi_tilde;
    opts.delta_c = cc.delta_c;
    opts.kappa_ceiling = cc.kappa_ceiling;
    opts.common_lyapunov = cc.common_lyapunov;
    return derive_spsf_constants(spec, cc.modes, opts);
  }
  /* published constants supplied verbatim; the contraction inequality is
     still verified below, and the additive-form fields mirror the max form
     since no conversion parameters accompany this provenance */
  SpsfCertificate cert;
  cert.modes = cc.modes;
  cert.epsilon = cc.epsilon;
  cert.dwell_time = cc.dwell_time.value_or(spec.dwell_time);
  std::vector<Matrix> Ms;
  for (const auto& m : cc.modes) Ms.push_back(m.M);
  cert.mu = cc.mu.value_or(cc.common_lyapunov ? 1.0 : compute_mu(Ms));
  cert.kappa_bar_base = 0.0;
  for (const auto& m : cc.modes)
    cert.kappa_bar_base =
        std::max(cert.kappa_bar_base, cc.common_lyapunov
                                          ? m.kappa_bar
                                          : std::pow(m.kappa_bar, (cc.epsilon - 1.0) / cc.epsilon));
  cert.rho_bar_int = cc.rho_int;
  cert.gamma_bar_coeff = cc.psi_coeff;
  cert.pi_tilde = 0.5;
  cert.delta_c = 1.0;
  cert.kappa = cc.kappa;
  cert.rho_int = cc.rho_int;
  cert.psi_coeff = cc.psi_coeff;
  cert.alpha = cc.alpha;
  cert.provenance = "paper";
  for (std::size_t p = 0; p < cc.modes.size(); ++p) {
    auto rep = check_lmi(spec.modes[p], cc.modes[p].M, cc.modes[p].kappa_bar, cc.modes[p].pi);
    if (!rep.holds)
      throw CertificateError("certify: contraction inequality fails for mode " + std::to_string(p) +
                             " (min eigenvalue " + std::to_string(rep.min_eigenvalue) + ")");
  }
  cert.validate();
  return cert;
}

std::vector<SpsfCertificate> load_all_certificates(const StageContext& ctx) {
  std::ifstream is(certificate_path(ctx));
  if (!is)
    throw StageError("compose", "certificates artifact missing; run the certify stage first");
  json j = json::parse(is);
  std::vector<SpsfCertificate> certs;
  for (const auto& item : j.at("subsystems"))
    certs.push_back(certificate_from_json_string(item.dump()));
  if (certs.size() == 1 && ctx.cfg.network.size() > 1)
    certs.assign(ctx.cfg.network.size(), certs[0]);
  return certs;
}

Matrix mu_bar_matrix(const StageContext& ctx) {
  const int N = ctx.cfg.network.size();
  Matrix mu_bar = Matrix::Zero(N, N);
  for (int j = 0; j < N; ++j) {
    const UniformGrid ig = input_grid_for(ctx, j);
    Eigen::Index off = 0;
    for (auto* c : ctx.cfg.network.inputs_of(j)) {
      double worst = 0.0;
      for (Eigen::Index r = 0; r < c->select.rows(); ++r)
        worst = std::max(worst, ig.width(static_cast<int>(off + r)));
      mu_bar(c->src, j) = worst;
      off += c->select.rows();
    }
  }
  return mu_bar;
}

}  // namespace

void cmd_abstract(const StageContext& ctx) {
  std::filesystem::create_directories(ctx.out);
  BuildOptions opts;
  opts.memory_cap_bytes = static_cast<std::uint64_t>(ctx.cfg.grid.memory_cap_gb * (1ull << 30));
  opts.window_sigmas = ctx.cfg.grid.window_sigmas;
  opts.threads = ctx.threads;
  json meta;
  meta["subsystems"] = json::array();
  for (int i : distinct_subsystems(ctx)) {
    const auto sg = state_grid_for(ctx, i);
    const auto ig = input_grid_for(ctx, i);
    FiniteMdp mdp = build_finite_mdp(ctx.cfg.network.subsystems[i], sg, ig, opts);
    if (ctx.cfg.grid.export_rows > 0)
      mdp.export_rows_csv(ctx.out / ("rows_" + std::to_string(i) + ".csv"),
                          ctx.cfg.grid.export_rows);
    auto path = abstraction_path(ctx, i);
    auto tmp = path;
    tmp += ".tmp";
    mdp.save(tmp);
    std::filesystem::rename(tmp, path);
    meta["subsystems"].push_back({{"index", i},
                                  {"path", path.filename().string()},
                                  {"state_cells", sg.cell_count()},
                                  {"input_cells", ig.cell_count()},
                                  {"delta_bar", sg.diameter()},
                                  {"mu_bar", ig.diameter()},
                                  {"rows", mdp.row_count()},
                                  {"entries", mdp.entry_count()}});
  }
  atomic_write_text(ctx.out / "abstraction_meta.json", meta.dump(2) + "\n");
}

void cmd_certify(const StageContext& ctx) {
  std::filesystem::create_directories(ctx.out);
  json j;
  j["version"] = 1;
  j["subsystems"] = json::array();
  json reports = json::array();
  for (int i : distinct_subsystems(ctx)) {
    SpsfCertificate cert = certificate_from_config(ctx, i);
    const auto& spec = ctx.cfg.network.subsystems[i];
    json lmi = json::array();
    for (std::size_t p = 0; p < cert.modes.size(); ++p) {
      auto rep = check_lmi(spec.modes[p], cert.modes[p].M, cert.modes[p].kappa_bar,
                           cert.modes[p].pi);
      lmi.push_back({{"mode", p}, {"holds", rep.holds}, {"min_eigenvalue", rep.min_eigenvalue}});
    }
    json report = {{"index", i}, {"lmi", lmi}, {"mu", cert.mu}, {"dwell_time", cert.dwell_time}};
    if (ctx.cfg.certificates.validation_tuples > 0) {
      auto val = validate_spsf_empirical(cert, spec, state_grid_for(ctx, i), input_grid_for(ctx, i),
                                         ctx.cfg.certificates.validation_tuples,
                                         ctx.cfg.certificates.validation_inner, 17);
      report["validation"] = {{"pass_fraction", val.pass_fraction},
                              {"lower_bound_fraction", val.lower_bound_fraction},
                              {"tuples", val.tuples}};
    }
    reports.push_back(report);
    j["subsystems"].push_back(json::parse(certificate_to_json_string(cert)));
  }
  j["reports"] = reports;
  atomic_write_text(certificate_path(ctx), j.dump(2) + "\n");
}

void cmd_compose(const StageContext& ctx) {
  auto certs = load_all_certificates(ctx);
  GainGraph g = assemble_gains(certs, ctx.cfg.network, Kinf::linear(ctx.cfg.certificates.lambda_bar),
                               Kinf::linear(ctx.cfg.certificates.delta_f));
  SmallGainResult sg = check_small_gain(g);
  if (!sg.feasible) {
    ComposedSsf empty;
    save_composition_json(g, sg, empty, composition_path(ctx));
    std::string cycle;
    for (int v : sg.witness_cycle) cycle += (cycle.empty() ? "" : " -> ") + std::to_string(v);
    throw StageError("compose", "small-gain condition infeasible: cycle [" + cycle +
                                    "] has gain product " + std::to_string(sg.witness_product));
  }
  std::vector<double> psi_values(certs.size());
  for (std::size_t i = 0; i < certs.size(); ++i)
    psi_values[i] = certs[i].psi(ctx.cfg.grid.delta_for(static_cast<int>(i)));
  ComposedSsf ssf =
      compose_ssf(certs, g, sg, ctx.cfg.grid.matched_io, mu_bar_matrix(ctx), psi_values,
                  Kinf::linear(ctx.cfg.certificates.lambda_bar),
                  Kinf::linear(ctx.cfg.certificates.delta_f));
  save_composition_json(g, sg, ssf, composition_path(ctx));
}

void cmd_bound(const StageContext& ctx) {
  std::ifstream is(composition_path(ctx));
  if (!is) throw StageError("bound", "composition artifact missing; run the compose stage first");
  json jc = json::parse(is);
  if (!jc.at("feasible").get<bool>())
    throw StageError("bound", "composition artifact records an infeasible small-gain condition");
  const double kappa = jc.at("kappa").get<double>();
  const Kinf alpha(jc.at("alpha").at("c").get<double>(), jc.at("alpha").at("q").get<double>());
  const double psi = jc.at("psi").get<double>();

  auto certs = load_all_certificates(ctx);
  std::vector<double> sigma = jc.at("sigma").get<std::vector<double>>();

  BoundQuery q;
  q.alpha = alpha;
  q.kappa = kappa;
  q.psi = psi;
  q.eps = ctx.cfg.bound.eps;
  q.horizon = ctx.cfg.bound.horizon;
  q.v0 = ctx.cfg.bound.v0;
  const double guarantee = closeness_probability(q);

  /* sweep coefficient: worst per-subsystem offset under a shared delta_bar.
     Without matched io the sweep assumes the internal input grids are
     refined along with the state grids (mu_bar = delta_bar), which folds the
     routed-output error into the same quadratic coefficient. */
  double psi_coeff = 0.0;
  const double c_lam = ctx.cfg.certificates.lambda_bar;
  const double d_f = ctx.cfg.certificates.delta_f;
  for (std::size_t i = 0; i < certs.size(); ++i) {
    double coeff = certs[i].psi_coeff;
    if (!ctx.cfg.grid.matched_io && !certs[i].rho_int.is_zero()) {
      const double split = certs[i].rho_int.c * (c_lam / (c_lam - 1.0)) * (c_lam / (c_lam - 1.0));
      coeff = (1.0 + 1.0 / d_f) * (split + coeff);
    }
    psi_coeff = std::max(psi_coeff, coeff / sigma[i]);
  }
  auto table = closeness_table(alpha, kappa, psi_coeff, ctx.cfg.bound.deltas, ctx.cfg.bound.eps,
                               ctx.cfg.bound.horizon, ctx.cfg.bound.v0);
  write_closeness_csv(table, ctx.out / "closeness.csv.tmp");
  std::filesystem::rename(ctx.out / "closeness.csv.tmp", ctx.out / "closeness.csv");

  std::vector<MemoryRow> mem;
  for (double db : ctx.cfg.bound.deltas) {
    const auto& spec = ctx.cfg.network.subsystems[0];
    const auto sg = UniformGrid::with_target_diameter(spec.state_box, db);
    const auto ig = UniformGrid::with_target_diameter(spec.input_box, db);
    MemoryRow row;
    row.delta_bar = db;
    row.n_x = static_cast<std::uint64_t>(sg.cell_count());
    row.estimate = memory_estimate(row.n_x, static_cast<std::uint64_t>(ig.cell_count()),
                                   spec.mode_count(), ctx.cfg.network.size());
    mem.push_back(row);
  }
  write_memory_csv(mem, ctx.out / "memory.csv.tmp");
  std::filesystem::rename(ctx.out / "memory.csv.tmp", ctx.out / "memory.csv");

  json out;
  out["eps"] = q.eps;
  out["horizon"] = q.horizon;
  out["v0"] = q.v0;
  out["kappa"] = kappa;
  out["psi"] = psi;
  out["alpha"] = {{"c", alpha.c}, {"q", alpha.q}};
  out["guarantee"] = guarantee;
  atomic_write_text(ctx.out / "bound.json", out.dump(2) + "\n");
}

void cmd_synthesize(const StageContext& ctx) {
  SynthesisOptions opts;
  opts.threads = ctx.threads;
  json meta;
  meta["subsystems"] = json::array();
  for (int i : distinct_subsystems(ctx)) {
    auto apath = abstraction_path(ctx, i);
    if (!std::filesystem::exists(apath))
      throw StageError("synthesize", "abstraction artifact missing; run the abstract stage first");
    FiniteMdp mdp = FiniteMdp::load(apath);
    const auto& spec = ctx.cfg.network.subsystems[i];
    SafetySpec safety;
    safety.horizon = ctx.cfg.synthesis.horizon;
    safety.safe_box = (ctx.cfg.synthesis.safe_lb.size() == spec.n)
                          ? Box(ctx.cfg.synthesis.safe_lb, ctx.cfg.synthesis.safe_ub)
                          : spec.state_box;
    auto res = safety_value_iteration(mdp, safety, spec.dwell_time, opts);
    auto path = policy_path(ctx, i);
    auto tmp = path;
    tmp += ".tmp";
    res.policy.save(tmp);
    std::filesystem::rename(tmp, path);
    const auto vpath = ctx.out / ("value_" + std::to_string(i) + ".csv");
    res.policy.export_value_csv(ctx.out / "value.csv.tmp", 0, 0);
    std::filesystem::rename(ctx.out / "value.csv.tmp", vpath);

    /* value at the configured initial augmented state */
    double v_init = 0.0;
    if (ctx.cfg.simulation.initial_state.size() == spec.n) {
      auto q = mdp.state_grid().quantize(ctx.cfg.simulation.initial_state);
      if (q.in_box) v_init = res.policy.value(q.cell, ctx.cfg.simulation.initial_mode, 0);
    }
    meta["subsystems"].push_back(
        {{"index", i}, {"path", path.filename().string()}, {"initial_value", v_init}});
  }
  atomic_write_text(ctx.out / "synthesis_meta.json", meta.dump(2) + "\n");
}

void cmd_simulate(const StageContext& ctx) {
  const int N = ctx.cfg.network.size();
  std::vector<UniformGrid> sgrids, igrids;
  std::vector<Policy> policies;
  for (int i = 0; i < N; ++i) {
    sgrids.push_back(state_grid_for(ctx, i));
    igrids.push_back(input_grid_for(ctx, i));
  }
  for (int i : distinct_subsystems(ctx)) {
    auto path = policy_path(ctx, i);
    if (!std::filesystem::exists(path))
      throw StageError("simulate", "policy artifact missing; run the synthesize stage first");
    policies.push_back(Policy::load(path));
  }
  std::vector<const UniformGrid*> sg(N), ig(N);
  std::vector<const Policy*> pol(N);
  for (int i = 0; i < N; ++i) {
    sg[i] = &sgrids[i];
    ig[i] = &igrids[i];
    pol[i] = ctx.cfg.homogeneous ? &policies[0] : &policies[i];
  }

  for (const auto& p : policies)
    if (p.horizon() < ctx.cfg.simulation.horizon)
      throw StageError("simulate", "policy horizon " + std::to_string(p.horizon()) +
                                       " shorter than the simulation horizon " +
                                       std::to_string(ctx.cfg.simulation.horizon) +
                                       "; re-run synthesize with a longer horizon");

  RolloutConfig rc;
  rc.runs = ctx.cfg.simulation.runs;
  rc.horizon = ctx.cfg.simulation.horizon;
  rc.seed = ctx.cfg.simulation.seed;
  rc.threads = ctx.threads;
  rc.keep_paths = ctx.cfg.simulation.keep_paths;
  for (int i = 0; i < N; ++i) {
    const auto& spec = ctx.cfg.network.subsystems[i];
    Vector init = ctx.cfg.simulation.initial_state.size() == spec.n
                      ? ctx.cfg.simulation.initial_state
                      : Vector((spec.state_box.lb + spec.state_box.ub) / 2.0);
    rc.init_concrete.push_back(init);
    rc.init_modes.push_back(ctx.cfg.simulation.initial_mode);
  }
  std::vector<Box> safe_boxes;
  for (int i = 0; i < N; ++i) {
    const auto& spec = ctx.cfg.network.subsystems[i];
    safe_boxes.push_back(ctx.cfg.synthesis.safe_lb.size() == spec.n
                             ? Box(ctx.cfg.synthesis.safe_lb, ctx.cfg.synthesis.safe_ub)
                             : spec.state_box);
  }

  auto trajs = rollout_pair(ctx.cfg.network, sg, ig, pol, rc, safe_boxes);
  auto dev = empirical_deviation_probability(trajs, ctx.cfg.simulation.eps);
  auto safety = empirical_safety(trajs);

  write_trajectories_csv(trajs, ctx.out / "trajectories.csv.tmp");
  std::filesystem::rename(ctx.out / "trajectories.csv.tmp", ctx.out / "trajectories.csv");
  json out;
  out["runs"] = trajs.runs;
  out["horizon"] = trajs.horizon;
  out["eps"] = ctx.cfg.simulation.eps;
  out["deviation_fraction"] = dev.fraction;
  out["deviation_se"] = dev.standard_error;
  out["safety_fraction"] = safety.fraction;
  out["safety_se"] = safety.standard_error;
  out["deviation_quantiles"] = {{"q50", deviation_quantile(trajs, 0.5)},
                                {"q90", deviation_quantile(trajs, 0.9)},
                                {"q99", deviation_quantile(trajs, 0.99)},
                                {"max", deviation_quantile(trajs, 1.0)}};
  atomic_write_text(ctx.out / "simulation.json", out.dump(2) + "\n");
}

void cmd_report(const StageContext& ctx) {
  json report;
  for (const char* name : {"bound.json", "simulation.json", "synthesis_meta.json",
                           "abstraction_meta.json", "composition.json"}) {
    std::ifstream is(ctx.out / name);
    if (is) report[name] = json::parse(is);
  }
  if (report.empty())
    throw StageError("report", "no artifacts found in " + ctx.out.string() + "; run stages first");
  atomic_write_text(ctx.out / "report.json", report.dump(2) + "\n");
}

void cmd_run(const StageContext& ctx) {
  cmd_abstract(ctx);
  cmd_certify(ctx);
  cmd_compose(ctx);
  cmd_bound(ctx);
  cmd_synthesize(ctx);
  cmd_simulate(ctx);
  cmd_report(ctx);
}

}  // namespace smdp
