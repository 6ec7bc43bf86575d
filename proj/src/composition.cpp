#include "smdp/composition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace smdp {

using nlohmann::json;

GainGraph assemble_gains(const std::vector<SpsfCertificate>& certs, const NetworkSpec& net,
                         Kinf lambda_bar, Kinf delta_f) {
  const int N = net.size();
  if (static_cast<int>(certs.size()) != N)
    throw std::invalid_argument("assemble_gains: one certificate per subsystem required");
  if (!lambda_bar.is_linear() || !(lambda_bar.c > 1.0))
    throw std::invalid_argument("assemble_gains: lambda_bar must be linear with slope > 1");
  if (delta_f.is_zero() || !delta_f.is_linear())
    throw std::invalid_argument("assemble_gains: delta_f must be linear with positive slope");

  GainGraph g;
  g.n = N;
  g.diag.resize(N);
  g.gain.assign(N, std::vector<Kinf>(N, Kinf::zero()));
  for (int i = 0; i < N; ++i) {
    if (!(certs[i].kappa > 0.0 && certs[i].kappa < 1.0))
      throw std::invalid_argument("assemble_gains: diagonal slope outside (0,1)");
    g.diag[i] = certs[i].kappa;
  }
  const Kinf amplify = Kinf::linear(1.0 + delta_f.c);  /* id + delta_f */
  for (const auto& conn : net.connections) {
    const int j = conn.src, i = conn.dst;  /* j's output drives i's input */
    if (certs[i].rho_int.is_zero()) continue;
    Kinf composite =
        amplify.compose(certs[i].rho_int.compose(lambda_bar.compose(certs[j].alpha.inverse())));
    if (!composite.is_linear())
      throw UnsupportedGainError("assemble_gains: channel " + std::to_string(j) + " -> " +
                                 std::to_string(i) + " composes to exponent " +
                                 std::to_string(composite.q) + ", only linear gains supported");
    /* several connections on the same channel: keep the larger gain */
    if (composite.c > g.gain[i][j].c) g.gain[i][j] = composite;
  }
  return g;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct LogEdge {
  int from, to;
  double w;
};

/* edges j -> i weighted log(gain of j on i); diagonal gains are self-loops */
std::vector<LogEdge> log_edges(const GainGraph& g) {
  std::vector<LogEdge> edges;
  for (int i = 0; i < g.n; ++i) {
    edges.push_back({i, i, std::log(g.diag[i])});
    for (int j = 0; j < g.n; ++j)
      if (i != j && g.present(i, j)) edges.push_back({j, i, std::log(g.slope(i, j))});
  }
  return edges;
}

/* exhaustive simple-cycle search over off-diagonal edges, used as a witness
   fallback on small graphs (diagonal 1-cycles are handled by the caller) */
void best_cycle_dfs(const GainGraph& g, int start, int v, double prod, std::vector<int>& path,
                    std::vector<bool>& on_path, std::vector<int>& best, double& best_prod) {
  for (int w = 0; w < g.n; ++w) {
    if (w == v || !g.present(w, v)) continue;  /* edge v -> w carries gain[w][v] */
    const double step = g.slope(w, v);
    if (w == start) {
      if (prod * step > best_prod) {
        best_prod = prod * step;
        best = path;
      }
      continue;
    }
    if (w < start || on_path[w]) continue;  /* canonical start = smallest vertex */
    on_path[w] = true;
    path.push_back(w);
    best_cycle_dfs(g, start, w, prod * step, path, on_path, best, best_prod);
    path.pop_back();
    on_path[w] = false;
  }
}

/* maximal simple-cycle product with its vertex sequence */
std::pair<double, std::vector<int>> max_cycle_product(const GainGraph& g) {
  double best_prod = 0.0;
  std::vector<int> best;
  for (int i = 0; i < g.n; ++i)
    if (g.diag[i] > best_prod) {
      best_prod = g.diag[i];
      best = {i};
    }
  for (int s = 0; s < g.n; ++s) {
    std::vector<int> path{s};
    std::vector<bool> on_path(g.n, false);
    on_path[s] = true;
    best_cycle_dfs(g, s, s, 1.0, path, on_path, best, best_prod);
  }
  return {best_prod, best};
}

}  // namespace

SmallGainResult check_small_gain(const GainGraph& g) {
  SmallGainResult res;
  const int n = g.n;
  if (n == 0) throw std::invalid_argument("check_small_gain: empty graph");
  const auto edges = log_edges(g);

  /* Karp: D[k][v] = max weight of a k-edge walk ending at v (any start) */
  std::vector<std::vector<double>> D(n + 1, std::vector<double>(n, kNegInf));
  std::vector<std::vector<int>> parent(n + 1, std::vector<int>(n, -1));
  for (int v = 0; v < n; ++v) D[0][v] = 0.0;
  for (int k = 1; k <= n; ++k)
    for (const auto& e : edges)
      if (D[k - 1][e.from] != kNegInf && D[k - 1][e.from] + e.w > D[k][e.to]) {
        D[k][e.to] = D[k - 1][e.from] + e.w;
        parent[k][e.to] = e.from;
      }

  double lambda = kNegInf;
  int arg_v = -1;
  for (int v = 0; v < n; ++v) {
    if (D[n][v] == kNegInf) continue;
    double worst = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k)
      if (D[k][v] != kNegInf)
        worst = std::min(worst, (D[n][v] - D[k][v]) / static_cast<double>(n - k));
    if (worst > lambda) {
      lambda = worst;
      arg_v = v;
    }
  }

  if (lambda == kNegInf) {  /* acyclic gain graph (cannot happen with self-loops) */
    res.feasible = true;
    res.max_cycle_mean = kNegInf;
  } else {
    res.max_cycle_mean = lambda;
    res.feasible = lambda < -1e-12;
  }

  if (!res.feasible) {
    /* walk the parent chain of the maximizing vertex; it must contain a cycle */
    std::vector<int> walk{arg_v};
    for (int k = n; k > 0; --k) walk.push_back(parent[k][walk.back()]);
    std::vector<int> seen(n, -1);
    for (std::size_t pos = 0; pos < walk.size(); ++pos) {
      const int v = walk[pos];
      if (seen[v] >= 0) {
        std::vector<int> cycle(walk.begin() + seen[v], walk.begin() + pos + 1);
        std::reverse(cycle.begin(), cycle.end());
        cycle.pop_back();  /* drop the repeated closing vertex */
        double prod = 1.0;
        for (std::size_t s = 0; s < cycle.size(); ++s) {
          const int u = cycle[s];
          const int w = cycle[(s + 1) % cycle.size()];
          prod *= (u == w) ? g.diag[u] : g.slope(w, u);
        }
        res.witness_product = prod;
        res.witness_cycle = cycle;
        break;
      }
      seen[v] = static_cast<int>(pos);
    }
    if (res.witness_product < 1.0 - 1e-9 && n <= 12) {
      auto [prod, cycle] = max_cycle_product(g);
      if (prod > res.witness_product) {
        res.witness_product = prod;
        res.witness_cycle = cycle;
      }
    }
    return res;
  }

  /*
   * Scalings: potentials phi with phi_i >= phi_j + log(gain_ij) + margin for
   * every edge j -> i. Shifting all weights by half the cycle-mean margin
   * keeps every cycle strictly negative, so longest-path relaxation
   * converges in n rounds.
   */
  const double margin = -lambda / 2.0;
  std::vector<double> phi(n, 0.0);
  for (int round = 0; round < n + 1; ++round) {
    bool changed = false;
    for (const auto& e : edges) {
      const double cand = phi[e.from] + e.w + margin;
      if (cand > phi[e.to] + 1e-15) {
        phi[e.to] = cand;
        changed = true;
      }
    }
    if (!changed) break;
  }
  const double phi_min = *std::min_element(phi.begin(), phi.end());
  res.sigma.resize(n);
  for (int v = 0; v < n; ++v) res.sigma[v] = std::exp(phi[v] - phi_min);

  res.max_scaled_gain = 0.0;
  for (int i = 0; i < n; ++i) {
    res.max_scaled_gain = std::max(res.max_scaled_gain, g.diag[i]);
    for (int j = 0; j < n; ++j)
      if (i != j && g.present(i, j))
        res.max_scaled_gain =
            std::max(res.max_scaled_gain, g.slope(i, j) * res.sigma[j] / res.sigma[i]);
  }
  if (res.max_scaled_gain >= 1.0)
    throw CompositionError("check_small_gain: scaling construction failed the post-hoc check");
  return res;
}

ComposedSsf compose_ssf(const std::vector<SpsfCertificate>& certs, const GainGraph& g,
                        const SmallGainResult& sg, bool matched_io, const Matrix& mu_bar,
                        const std::vector<double>& psi_values, Kinf lambda_bar, Kinf delta_f) {
  const int N = g.n;
  if (!sg.feasible) throw CompositionError("compose_ssf: small-gain condition infeasible");
  if (static_cast<int>(certs.size()) != N || static_cast<int>(psi_values.size()) != N ||
      static_cast<int>(sg.sigma.size()) != N)
    throw std::invalid_argument("compose_ssf: size mismatch");

  ComposedSsf out;
  out.kappa = sg.max_scaled_gain;

  /* max_i sigma_i^{-1} must be concave; linear scalings guarantee it */
  for (double s : sg.sigma)
    if (!(s > 0.0)) throw CompositionError("compose_ssf: nonpositive scaling");

  for (int i = 0; i < N; ++i) {
    double lambda_i = psi_values[i];
    bool has_inputs = false;
    double worst_mu = 0.0;
    for (int j = 0; j < N; ++j)
      if (j != i && g.present(i, j)) {
        has_inputs = true;
        if (!matched_io) worst_mu = std::max(worst_mu, mu_bar(j, i));
      }
    if (!matched_io && has_inputs && worst_mu > 0.0 && !certs[i].rho_int.is_zero()) {
      /* split the routed-output error: rho o lambda o (lambda - id)^{-1} at mu */
      const double c = lambda_bar.c;
      const Kinf split = certs[i].rho_int.compose(Kinf::linear(c / (c - 1.0)));
      lambda_i = (1.0 + 1.0 / delta_f.c) * (split(worst_mu) + psi_values[i]);
    }
    out.psi = std::max(out.psi, lambda_i / sg.sigma[i]);
  }

  /* alpha = beta^{-1}, beta(s) = max_i alpha_i^{-1}(sigma_i s); requires a
     common exponent so the pointwise max stays in the power-law family */
  const double q = certs[0].alpha.q;
  double beta_c = 0.0;
  for (int i = 0; i < N; ++i) {
    if (std::abs(certs[i].alpha.q - q) > 1e-12)
      throw CompositionError("compose_ssf: heterogeneous alpha exponents unsupported");
    beta_c = std::max(beta_c, certs[i].alpha.inverse().compose(Kinf::linear(sg.sigma[i])).c);
  }
  out.alpha = Kinf(beta_c, 1.0 / q).inverse();
  return out;
}

double initial_v0(const std::vector<SpsfCertificate>& certs, const std::vector<double>& sigma,
                  const std::vector<Vector>& a, const std::vector<Vector>& a_hat,
                  const std::vector<int>& initial_modes) {
  const auto N = certs.size();
  if (sigma.size() != N || a.size() != N || a_hat.size() != N || initial_modes.size() != N)
    throw std::invalid_argument("initial_v0: size mismatch");
  double v0 = 0.0;
  for (std::size_t i = 0; i < N; ++i)
    v0 = std::max(v0, certs[i].value(a[i], a_hat[i], initial_modes[i], 0) / sigma[i]);
  return v0;
}

void save_composition_json(const GainGraph& g, const SmallGainResult& sg, const ComposedSsf& ssf,
                           const std::filesystem::path& path) {
  json j;
  j["version"] = 1;
  j["n"] = g.n;
  j["diag"] = g.diag;
  json gains = json::array();
  for (int i = 0; i < g.n; ++i)
    for (int jj = 0; jj < g.n; ++jj)
      if (i != jj && g.present(i, jj))
        gains.push_back({{"i", i}, {"j", jj}, {"slope", g.slope(i, jj)}});
  j["gains"] = gains;
  j["feasible"] = sg.feasible;
  j["max_cycle_mean"] = sg.max_cycle_mean;
  j["sigma"] = sg.sigma;
  j["max_scaled_gain"] = sg.max_scaled_gain;
  if (!sg.feasible) {
    j["witness_cycle"] = sg.witness_cycle;
    j["witness_product"] = sg.witness_product;
  } else {
    j["kappa"] = ssf.kappa;
    j["psi"] = ssf.psi;
    j["alpha"] = {{"c", ssf.alpha.c}, {"q", ssf.alpha.q}};
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
}

}  // namespace smdp
