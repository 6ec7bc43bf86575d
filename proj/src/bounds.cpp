#include "smdp/bounds.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace smdp {

namespace {

/* (1-x)^T for x in [0,1], in log space so large horizons do not underflow */
double pow_one_minus(double x, int T) {
  if (x >= 1.0) return 0.0;
  if (x <= 0.0) return 1.0;
  return std::exp(static_cast<double>(T) * std::log1p(-x));
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

double kushner_delta(double v0, double eps, double kappa, double psi, int horizon) {
  if (!(eps > 0.0)) throw std::invalid_argument("kushner_delta: eps must be > 0");
  if (!(kappa > 0.0 && kappa < 1.0))
    throw std::invalid_argument("kushner_delta: kappa must be in (0,1)");
  if (psi < 0.0 || v0 < 0.0 || horizon < 0)
    throw std::invalid_argument("kushner_delta: psi, v0, horizon must be nonnegative");
  double delta;
  if (eps >= psi / kappa) {
    delta = 1.0 - (1.0 - v0 / eps) * pow_one_minus(psi / eps, horizon);
  } else {
    const double decay = pow_one_minus(kappa, horizon);
    delta = (v0 / eps) * decay + (psi / (kappa * eps)) * (1.0 - decay);
  }
  return clamp01(delta);
}

double closeness_probability(const BoundQuery& q) {
  const double level = q.alpha(q.eps);
  return 1.0 - kushner_delta(q.v0, level, q.kappa, q.psi, q.horizon);
}

std::vector<ClosenessRow> closeness_table(const Kinf& alpha, double kappa, double psi_coeff,
                                          const std::vector<double>& delta_bars, double eps,
                                          int horizon, double v0) {
  std::vector<ClosenessRow> rows;
  rows.reserve(delta_bars.size());
  for (double db : delta_bars) {
    ClosenessRow row;
    row.delta_bar = db;
    row.psi = psi_coeff * db * db;
    const double level = alpha(eps);
    row.branch = level >= row.psi / kappa ? 1 : 2;
    row.guarantee = 1.0 - kushner_delta(v0, level, kappa, row.psi, horizon);
    rows.push_back(row);
  }
  return rows;
}

MemoryEstimate memory_estimate(std::uint64_t n_x, std::uint64_t n_w, std::uint64_t m,
                               std::uint64_t N) {
  if (n_x == 0 || n_w == 0 || m == 0 || N == 0)
    throw std::invalid_argument("memory_estimate: arguments must be positive");
  MemoryEstimate est;
  est.per_subsystem_gb = 8.0 * static_cast<double>(n_x) * static_cast<double>(m) *
                         static_cast<double>(n_w) * static_cast<double>(n_x) / 1e9;
  est.monolithic_log10_gb = std::log10(8.0) +
                            2.0 * static_cast<double>(N) * std::log10(static_cast<double>(n_x)) +
                            static_cast<double>(N) * std::log10(static_cast<double>(m)) - 9.0;
  return est;
}

void write_closeness_csv(const std::vector<ClosenessRow>& rows,
                         const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.precision(17);
  os << "delta_bar,psi,branch,guarantee\n";
  for (const auto& r : rows)
    os << r.delta_bar << ',' << r.psi << ',' << r.branch << ',' << r.guarantee << '\n';
}

void write_memory_csv(const std::vector<MemoryRow>& rows, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.precision(17);
  os << "delta_bar,n_x,per_subsystem_gb,monolithic_log10_gb\n";
  for (const auto& r : rows)
    os << r.delta_bar << ',' << r.n_x << ',' << r.estimate.per_subsystem_gb << ','
       << r.estimate.monolithic_log10_gb << '\n';
}

}  // namespace smdp
