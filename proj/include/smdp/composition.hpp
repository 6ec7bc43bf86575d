/*
 * composition.hpp
 *
 * Interconnection gain graph, cyclic small-gain feasibility, and the
 * network-level simulation-function constants composed from per-subsystem
 * certificates.
 *
 * Only linear gains are supported in the cycle check; with quadratic
 * internal gains and quadratic lower bounds the composite gain of every
 * channel is linear, which covers the supported certificate family.
 */

#ifndef SMDP_COMPOSITION_HPP_
#define SMDP_COMPOSITION_HPP_

#include <filesystem>
#include <vector>

#include "smdp/certificates.hpp"
#include "smdp/kinf.hpp"
#include "smdp/model.hpp"

namespace smdp {

class UnsupportedGainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CompositionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GainGraph {
  int n = 0;
  std::vector<double> diag;  /* contraction slopes kappa_i, in (0,1) */
  /* gain[i][j]: influence of subsystem j on subsystem i; zero when absent */
  std::vector<std::vector<Kinf>> gain;

  double slope(int i, int j) const { return gain[i][j].c; }
  bool present(int i, int j) const { return !gain[i][j].is_zero(); }
};

/*
 * Channel gain (id + delta_f) o rho_int_i o lambda_bar o alpha_j^{-1} for
 * every connection j -> i, composed exactly in the power-law family. Throws
 * UnsupportedGainError when a composite is not linear.
 */
GainGraph assemble_gains(const std::vector<SpsfCertificate>& certs, const NetworkSpec& net,
                         Kinf lambda_bar = Kinf::linear(1.1), Kinf delta_f = Kinf::linear(0.05));

struct SmallGainResult {
  bool feasible = false;
  double max_cycle_mean = 0.0;        /* of log gains; feasible iff < 0 and diag < 1 */
  std::vector<int> witness_cycle;     /* vertices of a product >= 1 cycle when infeasible */
  double witness_product = 0.0;
  std::vector<double> sigma;          /* scaling slopes, min-normalized to 1 */
  double max_scaled_gain = 0.0;       /* max_ij sigma_i^{-1} gain_ij sigma_j, verified < 1 */
};

/*
 * Cycle condition via the maximum cycle mean of log gains (Karp), with the
 * scalings recovered from longest-path potentials shifted by half the
 * cycle-mean margin.
 */
SmallGainResult check_small_gain(const GainGraph& g);

struct ComposedSsf {
  double kappa = 0.0;
  double psi = 0.0;
  Kinf alpha = Kinf(1.0, 2.0);
};

/*
 * Network-level constants. psi_values are the per-subsystem offsets at the
 * configured discretization; mu_bar(j,i) is the internal-input quantization
 * parameter of channel j -> i (ignored when matched_io). lambda_bar and
 * delta_f must match the ones used to assemble the gains.
 */
ComposedSsf compose_ssf(const std::vector<SpsfCertificate>& certs, const GainGraph& g,
                        const SmallGainResult& sg, bool matched_io, const Matrix& mu_bar,
                        const std::vector<double>& psi_values,
                        Kinf lambda_bar = Kinf::linear(1.1), Kinf delta_f = Kinf::linear(0.05));

/* V0 = max_i sigma_i^{-1}((a_i - ah_i)' M_{p0_i} (a_i - ah_i)) at counter 0 */
double initial_v0(const std::vector<SpsfCertificate>& certs, const std::vector<double>& sigma,
                  const std::vector<Vector>& a, const std::vector<Vector>& a_hat,
                  const std::vector<int>& initial_modes);

void save_composition_json(const GainGraph& g, const SmallGainResult& sg, const ComposedSsf& ssf,
                           const std::filesystem::path& path);

}  // namespace smdp

#endif
