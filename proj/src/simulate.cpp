#include "smdp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "smdp/parallel.hpp"
#include "smdp/rng.hpp"

namespace smdp {

PairedTrajectories rollout_pair(const NetworkSpec& net,
                                const std::vector<const UniformGrid*>& state_grids,
                                const std::vector<const UniformGrid*>& input_grids,
                                const std::vector<const Policy*>& policies,
                                const RolloutConfig& cfg, const std::vector<Box>& safe_boxes) {
  const int N = net.size();
  if (static_cast<int>(state_grids.size()) != N || static_cast<int>(input_grids.size()) != N ||
      static_cast<int>(policies.size()) != N)
    throw std::invalid_argument("rollout_pair: per-subsystem arguments must match the network");
  if (static_cast<int>(cfg.init_concrete.size()) != N ||
      static_cast<int>(cfg.init_modes.size()) != N)
    throw std::invalid_argument("rollout_pair: initial condition size mismatch");
  if (cfg.runs < 1) throw std::invalid_argument("rollout_pair: need at least one run");
  for (const auto* p : policies)
    if (p->horizon() < cfg.horizon)
      throw std::invalid_argument("rollout_pair: policy horizon " + std::to_string(p->horizon()) +
                                  " shorter than the rollout horizon " +
                                  std::to_string(cfg.horizon));

  std::vector<Vector> init_hat = cfg.init_abstract;
  if (init_hat.empty()) {
    init_hat.resize(N);
    for (int i = 0; i < N; ++i) {
      auto q = state_grids[i]->quantize(cfg.init_concrete[i]);
      if (!q.in_box)
        throw std::invalid_argument("rollout_pair: initial state outside the analyzed box");
      init_hat[i] = q.rep;
    }
  }

  const CounterRng rng(cfg.seed);
  PairedTrajectories out;
  out.runs = cfg.runs;
  out.horizon = cfg.horizon;
  out.sup_deviation.assign(cfg.runs, 0.0);
  out.concrete_safe.assign(cfg.runs, 1);
  out.abstract_absorbed.assign(cfg.runs, 0);
  out.paths.resize(std::min(cfg.keep_paths, cfg.runs));

  std::vector<RefinedController> controllers;
  controllers.reserve(N);
  for (int i = 0; i < N; ++i) controllers.push_back(refine_policy(*policies[i], *state_grids[i]));

  parallel_for(cfg.runs, cfg.threads, [&](std::int64_t run) {
    std::vector<Vector> x = cfg.init_concrete;
    std::vector<Vector> xh = init_hat;
    std::vector<ModeCounter> mc(N);
    for (int i = 0; i < N; ++i) mc[i] = ModeCounter{cfg.init_modes[i], 0};
    bool abs_hat = false, safe = true;
    double sup = 0.0;

    StoredPath* path = run < static_cast<std::int64_t>(out.paths.size()) ? &out.paths[run] : nullptr;
    if (path) {
      path->run = static_cast<int>(run);
      path->concrete.reserve(cfg.horizon + 1);
    }

    auto record = [&](int /*step*/) {
      if (!path) return;
      path->concrete.push_back(x);
      path->abstract_rep.push_back(xh);
      std::vector<int> pm(N), pl(N);
      for (int i = 0; i < N; ++i) {
        pm[i] = mc[i].mode;
        pl[i] = mc[i].counter;
      }
      path->mode.push_back(pm);
      path->counter.push_back(pl);
    };

    auto update_stats = [&]() {
      double dev = 0.0;
      for (int i = 0; i < N; ++i) {
        const auto& spec = net.subsystems[i];
        if (abs_hat) {
          dev = std::numeric_limits<double>::infinity();
          break;
        }
        dev = std::max(dev, (spec.C * x[i] - spec.C * xh[i]).lpNorm<Eigen::Infinity>());
        if (!spec.state_box.contains(x[i])) dev = std::numeric_limits<double>::infinity();
      }
      sup = std::max(sup, dev);
      for (int i = 0; i < N; ++i) {
        const Box& sb = i < static_cast<int>(safe_boxes.size()) && safe_boxes[i].dim() > 0
                            ? safe_boxes[i]
                            : net.subsystems[i].state_box;
        if (!sb.contains(x[i])) safe = false;
      }
    };

    record(0);
    update_stats();

    for (int k = 0; k < cfg.horizon; ++k) {
      /* the refined controllers read the concrete states; the same requests
         drive both chains */
      std::vector<int> request(N);
      for (int i = 0; i < N; ++i) request[i] = controllers[i](x[i], mc[i].mode, mc[i].counter, k);

      auto w = interconnect(net, x);
      std::vector<Vector> wh(N);
      for (int j = 0; j < N; ++j) {
        Vector wj = Vector::Zero(net.subsystems[j].p_bar);
        Eigen::Index off = 0;
        for (auto* c : net.inputs_of(j)) {
          wj.segment(off, c->select.rows()) = c->select * xh[c->src];
          off += c->select.rows();
        }
        if (wj.size() > 0) {
          auto q = input_grids[j]->quantize(wj);
          wh[j] = q.in_box ? q.rep : input_grids[j]->representative(input_grids[j]->nearest_cell(wj));
        } else {
          wh[j] = wj;
        }
      }

      for (int i = 0; i < N; ++i) {
        const auto& spec = net.subsystems[i];
        const auto next_mc = dwell_step(mc[i], request[i], spec.dwell_time);
        Vector noise(spec.n);
        for (int d = 0; d < spec.n; ++d)
          noise[d] = rng.normal(static_cast<std::uint64_t>(run) + 1, k, i, d);
        if (spec.noise.kind == NoiseKind::ScaledNormal)
          noise = noise.cwiseProduct(spec.noise.sigma);
        else if (spec.noise.kind == NoiseKind::None)
          noise.setZero();

        x[i] = concrete_step(spec, x[i], next_mc.mode, w.w[i], noise);
        if (!abs_hat) {
          auto q = abstract_step(*state_grids[i], spec, xh[i], next_mc.mode, wh[i], noise);
          if (!q.in_box)
            abs_hat = true;
          else
            xh[i] = q.rep;
        }
        mc[i] = next_mc;
      }
      record(k + 1);
      update_stats();
    }

    out.sup_deviation[run] = sup;
    out.concrete_safe[run] = safe ? 1 : 0;
    out.abstract_absorbed[run] = abs_hat ? 1 : 0;
  });

  return out;
}

FractionEstimate empirical_deviation_probability(const PairedTrajectories& t, double eps) {
  FractionEstimate est;
  if (t.runs == 0) return est;
  int count = 0;
  for (double d : t.sup_deviation)
    if (d >= eps) ++count;
  est.fraction = static_cast<double>(count) / t.runs;
  est.standard_error = std::sqrt(est.fraction * (1.0 - est.fraction) / t.runs);
  return est;
}

FractionEstimate empirical_safety(const PairedTrajectories& t) {
  FractionEstimate est;
  if (t.runs == 0) return est;
  int count = 0;
  for (auto s : t.concrete_safe)
    if (s) ++count;
  est.fraction = static_cast<double>(count) / t.runs;
  est.standard_error = std::sqrt(est.fraction * (1.0 - est.fraction) / t.runs);
  return est;
}

double deviation_quantile(const PairedTrajectories& t, double q) {
  if (t.sup_deviation.empty()) return 0.0;
  std::vector<double> sorted = t.sup_deviation;
  std::sort(sorted.begin(), sorted.end());
  const auto idx = static_cast<std::size_t>(
      std::min(static_cast<double>(sorted.size() - 1), q * (sorted.size() - 1)));
  return sorted[idx];
}

void write_trajectories_csv(const PairedTrajectories& t, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.precision(17);
  os << "run,step,subsystem,mode,counter,state,abstract_state\n";
  for (const auto& p : t.paths)
    for (std::size_t k = 0; k < p.concrete.size(); ++k)
      for (std::size_t i = 0; i < p.concrete[k].size(); ++i) {
        os << p.run << ',' << k << ',' << i << ',' << p.mode[k][i] << ',' << p.counter[k][i] << ",\"";
        for (Eigen::Index d = 0; d < p.concrete[k][i].size(); ++d)
          os << (d ? ";" : "") << p.concrete[k][i][d];
        os << "\",\"";
        for (Eigen::Index d = 0; d < p.abstract_rep[k][i].size(); ++d)
          os << (d ? ";" : "") << p.abstract_rep[k][i][d];
        os << "\"\n";
      }
}

}  // namespace smdp
