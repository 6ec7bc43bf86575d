/*
 * certificates.hpp
 *
 * Quadratic incremental-stability certificates for switched subsystems and
 * the constants of the stochastic pseudo-simulation function they induce.
 *
 * The per-mode data is (M_p, kappa_bar_p, pi_p) with V_p(x, xh) =
 * (x-xh)' M_p (x-xh). The additive one-step contraction splits into a state
 * term, an internal-input gain and a discretization offset; those are then
 * converted to the max form (kappa, rho_int, psi) used by the composition
 * and bound layers. The offset scales with the squared state discretization
 * parameter, so it is stored as a coefficient on delta_bar^2.
 */

#ifndef SMDP_CERTIFICATES_HPP_
#define SMDP_CERTIFICATES_HPP_

#include <filesystem>
#include <optional>
#include <vector>

#include "smdp/grid.hpp"
#include "smdp/kinf.hpp"
#include "smdp/model.hpp"

namespace smdp {

class CertificateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModeCertificate {
  Matrix M;
  double kappa_bar = 0.0;  /* contraction rate in (0,1) */
  double pi = 0.0;         /* Young-inequality parameter, > 0 */
};

struct SpsfCertificate {
  std::vector<ModeCertificate> modes;
  double mu = 1.0;       /* multiple-Lyapunov comparison constant, >= 1 */
  double epsilon = 2.0;  /* dwell-time margin, > 1 */
  int dwell_time = 1;

  /* additive form */
  double kappa_bar_base = 0.0;  /* max_p kappa_bar_p^((eps-1)/eps), or kappa_bar_p when common */
  Kinf rho_bar_int = Kinf::zero();
  double gamma_bar_coeff = 0.0;  /* additive offset = gamma_bar_coeff * delta_bar^2 */

  /* free parameters of the max-form conversion */
  double pi_tilde = 0.5;
  double delta_c = 1.0;

  /* max form */
  double kappa = 0.0;
  Kinf rho_int = Kinf::zero();
  double psi_coeff = 0.0;  /* psi = psi_coeff * delta_bar^2 */
  Kinf alpha = Kinf(1.0, 2.0);

  std::string provenance = "derived";  /* "paper" | "derived" */

  int mode_count() const { return static_cast<int>(modes.size()); }
  double psi(double delta_bar) const { return psi_coeff * delta_bar * delta_bar; }

  /* V((x,p,l),(xh,p,l)) = kappa_bar_p^(-l/eps) (x-xh)' M_p (x-xh) */
  double value(const Vector& x, const Vector& x_hat, int mode, int counter) const;

  void validate() const;  /* invariants, including the dwell-time bound */
};

struct LmiReport {
  bool holds = false;
  double min_eigenvalue = 0.0;  /* of the residual (right block minus left block) */
};

/*
 * Feasibility of the one-step contraction inequality for one mode: the
 * 2x2-block matrix with state block (1+2pi) A'MA and channel block
 * (1+2pi) E'ME must be dominated by [kappa_bar M, -F'; -F, (2/a_bar) I].
 * An infinite slope bound zeroes the 2/a_bar entry.
 */
LmiReport check_lmi(const ModeDynamics& mode, const Matrix& M, double kappa_bar, double pi);

/* smallest kappa_bar for which check_lmi holds, by bisection */
double minimal_kappa_bar(const ModeDynamics& mode, const Matrix& M, double pi, double tol = 1e-6);

/*
 * Comparison constant between the quadratic functions of different modes:
 * max over ordered pairs p != p' of lmax(M_p)/lmin(M_p'). Identical matrices
 * compare with constant 1.
 */
double compute_mu(const std::vector<Matrix>& Ms);

/* smallest integer dwell time with k_d >= eps ln(mu)/ln(1/kappa_bar_p) + 1 for all p */
int min_dwell_time(double epsilon, double mu, const std::vector<double>& kappa_bars);

struct DeriveOptions {
  double epsilon = 1.75;
  std::optional<int> dwell_time;      /* default: minimal feasible */
  std::optional<double> pi_tilde;     /* default: grid search */
  std::optional<double> delta_c;
  double kappa_ceiling = 0.99;
  bool common_lyapunov = false;
};

SpsfCertificate derive_spsf_constants(const SubsystemSpec& spec,
                                      const std::vector<ModeCertificate>& modes,
                                      const DeriveOptions& opts = {});

struct SpsfValidationReport {
  int tuples = 0;
  int inner_samples = 0;
  double pass_fraction = 0.0;         /* expectation inequality with statistical margin */
  double lower_bound_fraction = 0.0;  /* pointwise alpha(||C(x-xh)||) <= V */
  double worst_ratio = 0.0;           /* max over tuples of estimate / bound */
};

/*
 * Monte Carlo check of the simulation-function conditions on random
 * (x, x_hat, mode, counter, w, w_hat) tuples. The expectation over the
 * shared noise is estimated by inner sampling; a tuple passes when the
 * estimate is below max(kappa V, rho_int(||w - w_hat||), psi) plus three
 * standard errors. Report-only.
 */
SpsfValidationReport validate_spsf_empirical(const SpsfCertificate& cert,
                                             const SubsystemSpec& spec,
                                             const UniformGrid& state_grid,
                                             const UniformGrid& input_grid, int tuples,
                                             int inner_samples, std::uint64_t seed);

void save_certificate_json(const SpsfCertificate& cert, const std::filesystem::path& path);
SpsfCertificate load_certificate_json(const std::filesystem::path& path);
std::string certificate_to_json_string(const SpsfCertificate& cert);
SpsfCertificate certificate_from_json_string(const std::string& text);

/* symmetric eigenvalue helpers shared with the composition layer */
double min_eigenvalue(const Matrix& symmetric);
double max_eigenvalue(const Matrix& symmetric);

}  // namespace smdp

#endif
