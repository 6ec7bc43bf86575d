#include "smdp/certificates.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include <json.hpp>

#include "smdp/fmdp.hpp"
#include "smdp/rng.hpp"

namespace smdp {

using nlohmann::json;

double min_eigenvalue(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eigenvalue(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double SpsfCertificate::value(const Vector& x, const Vector& x_hat, int mode, int counter) const {
  const auto& mc = modes.at(mode);
  const Vector d = x - x_hat;
  const double base = d.dot(mc.M * d);
  return std::pow(mc.kappa_bar, -static_cast<double>(counter) / epsilon) * base;
}

void SpsfCertificate::validate() const {
  if (modes.empty()) throw CertificateError("certificate: no modes");
  if (!(mu >= 1.0)) throw CertificateError("certificate: mu must be >= 1");
  if (!(epsilon > 1.0)) throw CertificateError("certificate: epsilon must be > 1");
  if (dwell_time < 1) throw CertificateError("certificate: dwell time must be >= 1");
  if (!(kappa > 0.0 && kappa < 1.0)) throw CertificateError("certificate: kappa must be in (0,1)");
  for (const auto& mc : modes) {
    if (!(mc.kappa_bar > 0.0 && mc.kappa_bar < 1.0))
      throw CertificateError("certificate: kappa_bar must be in (0,1)");
    if (min_eigenvalue(mc.M) <= 0.0)
      throw CertificateError("certificate: M must be positive definite");
    const double bound = epsilon * std::log(mu) / std::log(1.0 / mc.kappa_bar) + 1.0;
    if (dwell_time + 1e-9 < bound)
      throw CertificateError("certificate: dwell time " + std::to_string(dwell_time) +
                             " below the required bound " + std::to_string(bound));
  }
}

LmiReport check_lmi(const ModeDynamics& mode, const Matrix& M, double kappa_bar, double pi) {
  if (M.rows() != M.cols() || M.rows() != mode.A.rows())
    throw std::invalid_argument("check_lmi: M dimension mismatch");
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("check_lmi: M must be symmetric");
  if (!(pi > 0.0)) throw std::invalid_argument("check_lmi: pi must be > 0");
  if (!(kappa_bar > 0.0 && kappa_bar < 1.0))
    throw std::invalid_argument("check_lmi: kappa_bar must be in (0,1)");

  const auto n = mode.A.rows();
  const auto r = mode.channels();
  const double t = 1.0 + 2.0 * pi;

  Matrix residual(n + r, n + r);
  residual.topLeftCorner(n, n) = kappa_bar * M - t * mode.A.transpose() * M * mode.A;
  if (r > 0) {
    residual.topRightCorner(n, r) = -mode.F.transpose() - mode.A.transpose() * M * mode.E;
    residual.bottomLeftCorner(r, n) = residual.topRightCorner(n, r).transpose();
    const double inv_slope =
        std::isinf(mode.phi.slope_bound) ? 0.0 : 2.0 / mode.phi.slope_bound;
    residual.bottomRightCorner(r, r) =
        inv_slope * Matrix::Identity(r, r) - t * mode.E.transpose() * M * mode.E;
  }
  LmiReport rep;
  rep.min_eigenvalue = min_eigenvalue(residual);
  rep.holds = rep.min_eigenvalue >= -1e-9;
  return rep;
}

double minimal_kappa_bar(const ModeDynamics& mode, const Matrix& M, double pi, double tol) {
  double lo = tol, hi = 1.0 - tol;
  if (check_lmi(mode, M, lo, pi).holds) return lo;
  if (!check_lmi(mode, M, hi, pi).holds)
    throw CertificateError("minimal_kappa_bar: infeasible for every kappa_bar in (0,1)");
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (check_lmi(mode, M, mid, pi).holds ? hi : lo) = mid;
  }
  return hi;
}

double compute_mu(const std::vector<Matrix>& Ms) {
  if (Ms.empty()) throw CertificateError("compute_mu: no matrices");
  std::vector<double> lmin(Ms.size()), lmax(Ms.size());
  for (std::size_t p = 0; p < Ms.size(); ++p) {
    lmin[p] = min_eigenvalue(Ms[p]);
    lmax[p] = max_eigenvalue(Ms[p]);
    if (lmin[p] <= 0.0) throw CertificateError("compute_mu: matrix not positive definite");
  }
  double mu = 1.0;
  for (std::size_t p = 0; p < Ms.size(); ++p)
    for (std::size_t q = 0; q < Ms.size(); ++q) {
      if (p == q) continue;
      /* identical functions compare with constant 1, not their condition number */
      if ((Ms[p] - Ms[q]).cwiseAbs().maxCoeff() <= 1e-12) continue;
      mu = std::max(mu, lmax[p] / lmin[q]);
    }
  return mu;
}

int min_dwell_time(double epsilon, double mu, const std::vector<double>& kappa_bars) {
  if (!(epsilon > 1.0)) throw std::invalid_argument("min_dwell_time: epsilon must be > 1");
  if (!(mu >= 1.0)) throw std::invalid_argument("min_dwell_time: mu must be >= 1");
  int kd = 1;
  for (double kb : kappa_bars) {
    if (!(kb > 0.0 && kb < 1.0))
      throw std::invalid_argument("min_dwell_time: kappa_bar must be in (0,1)");
    const double bound = epsilon * std::log(mu) / std::log(1.0 / kb) + 1.0;
    kd = std::max(kd, static_cast<int>(std::ceil(bound - 1e-9)));
  }
  return kd;
}

namespace {

struct AdditiveConstants {
  double kappa_bar_base;
  double rho_slope;   /* quadratic internal gain coefficient */
  double gamma_coeff; /* offset coefficient on delta_bar^2 */
};

AdditiveConstants additive_constants(const SubsystemSpec& spec,
                                     const std::vector<ModeCertificate>& modes, double epsilon,
                                     int dwell_time, bool common_lyapunov) {
  AdditiveConstants out{0.0, 0.0, 0.0};
  for (std::size_t p = 0; p < modes.size(); ++p) {
    const auto& mc = modes[p];
    const double contraction = common_lyapunov
                                   ? mc.kappa_bar
                                   : std::pow(mc.kappa_bar, (epsilon - 1.0) / epsilon);
    /* counter rescaling inflates the input and offset terms by at most kappa_bar^(-kd/eps) */
    const double inflate =
        common_lyapunov ? 1.0 : std::pow(mc.kappa_bar, -static_cast<double>(dwell_time) / epsilon);
    const auto& dyn = spec.modes[p];
    double rho = 0.0;
    if (spec.p_bar > 0 && dyn.D.cwiseAbs().maxCoeff() > 0.0) {
      const double mdm = max_eigenvalue(dyn.D.transpose() * mc.M * dyn.D);
      rho = inflate * spec.p_bar * (1.0 + mc.pi + 2.0 / mc.pi) * mdm;
    }
    const double gamma = inflate * spec.n * (1.0 + 3.0 / mc.pi) * max_eigenvalue(mc.M);
    out.kappa_bar_base = std::max(out.kappa_bar_base, contraction);
    out.rho_slope = std::max(out.rho_slope, rho);
    out.gamma_coeff = std::max(out.gamma_coeff, gamma);
  }
  return out;
}

/* max-form conversion for fixed free parameters */
void apply_max_form(SpsfCertificate& cert) {
  const double one_minus = (1.0 - cert.kappa_bar_base) * cert.pi_tilde;
  cert.kappa = 1.0 - (1.0 - cert.pi_tilde) * (1.0 - cert.kappa_bar_base);
  cert.rho_int = cert.rho_bar_int.is_zero()
                     ? Kinf::zero()
                     : cert.rho_bar_int.scaled((1.0 + cert.delta_c) / one_minus);
  cert.psi_coeff = (1.0 + 1.0 / cert.delta_c) / one_minus * cert.gamma_bar_coeff;
}

}  // namespace

SpsfCertificate derive_spsf_constants(const SubsystemSpec& spec,
                                      const std::vector<ModeCertificate>& modes,
                                      const DeriveOptions& opts) {
  spec.validate();
  if (modes.size() != static_cast<std::size_t>(spec.mode_count()))
    throw CertificateError("derive_spsf_constants: one certificate per mode required");
  if (!(opts.epsilon > 1.0)) throw CertificateError("derive_spsf_constants: epsilon must be > 1");

  for (std::size_t p = 0; p < modes.size(); ++p) {
    auto rep = check_lmi(spec.modes[p], modes[p].M, modes[p].kappa_bar, modes[p].pi);
    if (!rep.holds)
      throw CertificateError("derive_spsf_constants: contraction inequality fails for mode " +
                             std::to_string(p) + " (min eigenvalue " +
                             std::to_string(rep.min_eigenvalue) + ")");
  }

  if (opts.common_lyapunov) {
    for (std::size_t p = 1; p < modes.size(); ++p)
      if ((modes[p].M - modes[0].M).cwiseAbs().maxCoeff() > 1e-12)
        throw CertificateError("derive_spsf_constants: common Lyapunov flag requires identical M");
  }

  SpsfCertificate cert;
  cert.modes = modes;
  cert.epsilon = opts.epsilon;
  std::vector<Matrix> Ms;
  std::vector<double> kbs;
  for (const auto& mc : modes) {
    Ms.push_back(mc.M);
    kbs.push_back(mc.kappa_bar);
  }
  cert.mu = opts.common_lyapunov ? 1.0 : compute_mu(Ms);
  const int kd_min = min_dwell_time(opts.epsilon, cert.mu, kbs);
  cert.dwell_time = opts.dwell_time.value_or(kd_min);
  if (cert.dwell_time < kd_min)
    throw CertificateError("derive_spsf_constants: dwell time " + std::to_string(cert.dwell_time) +
                           " infeasible, need at least " + std::to_string(kd_min));

  const auto add =
      additive_constants(spec, modes, opts.epsilon, cert.dwell_time, opts.common_lyapunov);
  cert.kappa_bar_base = add.kappa_bar_base;
  cert.rho_bar_int = add.rho_slope > 0.0 ? Kinf(add.rho_slope, 2.0) : Kinf::zero();
  cert.gamma_bar_coeff = add.gamma_coeff;

  /* lower bound: alpha(s) = min_p lmin(M_p) / (n lmax(C'C)) s^2 */
  double alpha_c = std::numeric_limits<double>::infinity();
  const double ctc = max_eigenvalue(spec.C.transpose() * spec.C);
  for (const auto& mc : modes)
    alpha_c = std::min(alpha_c, min_eigenvalue(mc.M) / (spec.n * ctc));
  cert.alpha = Kinf(alpha_c, 2.0);

  if (opts.pi_tilde && opts.delta_c) {
    if (!(*opts.pi_tilde > 0.0 && *opts.pi_tilde < 1.0))
      throw CertificateError("derive_spsf_constants: pi_tilde must be in (0,1)");
    if (!(*opts.delta_c > 0.0))
      throw CertificateError("derive_spsf_constants: delta_c must be > 0");
    cert.pi_tilde = *opts.pi_tilde;
    cert.delta_c = *opts.delta_c;
    apply_max_form(cert);
  } else {
    /*
     * Coarse grid search: smallest psi coefficient subject to kappa staying
     * below the ceiling. delta_c capped so the internal gain stays finite.
     */
    double best_psi = std::numeric_limits<double>::infinity();
    double best_rho = std::numeric_limits<double>::infinity();
    SpsfCertificate best = cert;
    bool found = false;
    for (int i = 1; i <= 99; ++i) {
      const double pt = opts.pi_tilde.value_or(i / 100.0);
      for (double dc : {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0}) {
        SpsfCertificate cand = cert;
        cand.pi_tilde = pt;
        cand.delta_c = opts.delta_c.value_or(dc);
        apply_max_form(cand);
        if (cand.kappa > opts.kappa_ceiling) continue;
        const double rho = cand.rho_int.c;
        if (cand.psi_coeff < best_psi - 1e-12 ||
            (std::abs(cand.psi_coeff - best_psi) <= 1e-12 && rho < best_rho)) {
          best_psi = cand.psi_coeff;
          best_rho = rho;
          best = cand;
          found = true;
        }
        if (opts.delta_c) break;
      }
      if (opts.pi_tilde) break;
    }
    if (!found)
      throw CertificateError("derive_spsf_constants: no free parameters satisfy the kappa ceiling");
    cert = best;
  }

  if (!(cert.kappa > cert.kappa_bar_base && cert.kappa < 1.0))
    throw CertificateError("derive_spsf_constants: converted kappa out of range");
  cert.provenance = "derived";
  cert.validate();
  return cert;
}

SpsfValidationReport validate_spsf_empirical(const SpsfCertificate& cert,
                                             const SubsystemSpec& spec,
                                             const UniformGrid& state_grid,
                                             const UniformGrid& input_grid, int tuples,
                                             int inner_samples, std::uint64_t seed) {
  spec.validate();
  cert.validate();
  if (cert.mode_count() != spec.mode_count())
    throw CertificateError("validate_spsf_empirical: certificate and subsystem disagree on modes");

  const CounterRng rng(seed);
  const double delta_bar = state_grid.diameter();
  const double psi = cert.psi(delta_bar);
  const int kd = cert.dwell_time;
  const int m = spec.mode_count();

  SpsfValidationReport rep;
  rep.tuples = tuples;
  rep.inner_samples = inner_samples;
  int passed = 0, lower_ok = 0;

  for (int t = 0; t < tuples; ++t) {
    /* tuple draw: concrete point, abstract representative, inputs, automaton state */
    Vector x(spec.n);
    for (int d = 0; d < spec.n; ++d)
      x[d] = spec.state_box.lb[d] +
             rng.uniform01(t, 0, d) * (spec.state_box.ub[d] - spec.state_box.lb[d]);
    const auto cell = static_cast<std::int64_t>(rng.word(t, 1) % state_grid.cell_count());
    const Vector x_hat = state_grid.representative(cell);
    Vector w(spec.p_bar);
    for (int d = 0; d < spec.p_bar; ++d)
      w[d] = spec.input_box.lb[d] +
             rng.uniform01(t, 2, d) * (spec.input_box.ub[d] - spec.input_box.lb[d]);
    Vector w_hat = spec.p_bar > 0
                       ? input_grid.representative(
                             static_cast<std::int64_t>(rng.word(t, 3) % input_grid.cell_count()))
                       : Vector(0);
    const int p = static_cast<int>(rng.word(t, 4) % m);
    const int l = static_cast<int>(rng.word(t, 5) % kd);
    const int requested = (l < kd - 1) ? p : static_cast<int>(rng.word(t, 6) % m);
    const auto next_mc = dwell_step({p, l}, requested, kd);

    const double v = cert.value(x, x_hat, p, l);
    if (cert.alpha((spec.C * (x - x_hat)).lpNorm<Eigen::Infinity>()) <= v + 1e-12) ++lower_ok;

    const double gap = spec.p_bar > 0 ? (w - w_hat).lpNorm<Eigen::Infinity>() : 0.0;
    const double bound = std::max({cert.kappa * v, cert.rho_int(gap), psi});

    /* inner expectation over shared noise; the abstract successor is
       re-quantized through the nearest cell so the estimate stays finite */
    double sum = 0.0, sumsq = 0.0;
    for (int s = 0; s < inner_samples; ++s) {
      Vector noise(spec.n);
      for (int d = 0; d < spec.n; ++d) noise[d] = rng.normal(t, 7, s, d);
      if (spec.noise.kind == NoiseKind::ScaledNormal)
        noise = noise.cwiseProduct(spec.noise.sigma);
      else if (spec.noise.kind == NoiseKind::None)
        noise.setZero();
      const Vector x_next = concrete_step(spec, x, next_mc.mode, w, noise);
      const Vector f_hat = concrete_step(spec, x_hat, next_mc.mode, w_hat, noise);
      const Vector x_hat_next = state_grid.representative(state_grid.nearest_cell(f_hat));
      const double vn = cert.value(x_next, x_hat_next, next_mc.mode, next_mc.counter);
      sum += vn;
      sumsq += vn * vn;
    }
    const double mean = sum / inner_samples;
    const double var = std::max(0.0, sumsq / inner_samples - mean * mean);
    const double se = std::sqrt(var / inner_samples);
    if (mean <= bound + 3.0 * se + 1e-12) ++passed;
    if (bound > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, mean / bound);
  }

  rep.pass_fraction = tuples > 0 ? static_cast<double>(passed) / tuples : 1.0;
  rep.lower_bound_fraction = tuples > 0 ? static_cast<double>(lower_ok) / tuples : 1.0;
  return rep;
}

/* ---- JSON persistence -------------------------------------------------- */

namespace {

json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.size();
  const auto cols = rows > 0 ? j.at(0).size() : 0;
  Matrix M(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < cols; ++k) M(i, k) = j.at(i).at(k).get<double>();
  return M;
}

json kinf_to_json(const Kinf& f) { return json{{"c", f.c}, {"q", f.q}}; }

Kinf kinf_from_json(const json& j) { return Kinf(j.at("c").get<double>(), j.at("q").get<double>()); }

}  // namespace

std::string certificate_to_json_string(const SpsfCertificate& cert) {
  json j;
  j["version"] = 1;
  j["provenance"] = cert.provenance;
  j["mu"] = cert.mu;
  j["epsilon"] = cert.epsilon;
  j["dwell_time"] = cert.dwell_time;
  j["kappa_bar_base"] = cert.kappa_bar_base;
  j["rho_bar_int"] = kinf_to_json(cert.rho_bar_int);
  j["gamma_bar_coeff"] = cert.gamma_bar_coeff;
  j["pi_tilde"] = cert.pi_tilde;
  j["delta_c"] = cert.delta_c;
  j["kappa"] = cert.kappa;
  j["rho_int"] = kinf_to_json(cert.rho_int);
  j["psi_coeff"] = cert.psi_coeff;
  j["alpha"] = kinf_to_json(cert.alpha);
  j["modes"] = json::array();
  for (const auto& mc : cert.modes)
    j["modes"].push_back(
        {{"M", matrix_to_json(mc.M)}, {"kappa_bar", mc.kappa_bar}, {"pi", mc.pi}});
  return j.dump(2);
}

void save_certificate_json(const SpsfCertificate& cert, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << certificate_to_json_string(cert) << '\n';
}

SpsfCertificate certificate_from_json_string(const std::string& text) {
  json j = json::parse(text);
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error("certificate version unsupported");
  SpsfCertificate cert;
  cert.provenance = j.at("provenance").get<std::string>();
  cert.mu = j.at("mu").get<double>();
  cert.epsilon = j.at("epsilon").get<double>();
  cert.dwell_time = j.at("dwell_time").get<int>();
  cert.kappa_bar_base = j.at("kappa_bar_base").get<double>();
  cert.rho_bar_int = kinf_from_json(j.at("rho_bar_int"));
  cert.gamma_bar_coeff = j.at("gamma_bar_coeff").get<double>();
  cert.pi_tilde = j.at("pi_tilde").get<double>();
  cert.delta_c = j.at("delta_c").get<double>();
  cert.kappa = j.at("kappa").get<double>();
  cert.rho_int = kinf_from_json(j.at("rho_int"));
  cert.psi_coeff = j.at("psi_coeff").get<double>();
  cert.alpha = kinf_from_json(j.at("alpha"));
  for (const auto& m : j.at("modes"))
    cert.modes.push_back(ModeCertificate{matrix_from_json(m.at("M")),
                                         m.at("kappa_bar").get<double>(), m.at("pi").get<double>()});
  cert.validate();
  return cert;
}

SpsfCertificate load_certificate_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return certificate_from_json_string(text);
}

}  // namespace smdp
