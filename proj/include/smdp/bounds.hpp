/*
 * bounds.hpp
 *
 * Finite-horizon probabilistic closeness bounds from a simulation-function
 * certificate, plus the memory-footprint estimates for building finite MDPs
 * per subsystem versus monolithically.
 */

#ifndef SMDP_BOUNDS_HPP_
#define SMDP_BOUNDS_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "smdp/kinf.hpp"

namespace smdp {

struct BoundQuery {
  Kinf alpha = Kinf(1.0, 2.0);
  double kappa = 0.0;  /* in (0,1) */
  double psi = 0.0;    /* >= 0 */
  double eps = 0.0;    /* deviation level, > 0 */
  int horizon = 0;
  double v0 = 0.0;     /* simulation function at the initial pair */
};

/*
 * Supermartingale excursion bound: probability that the function exceeds
 * level eps within the horizon. Two branches keyed on eps >= psi/kappa:
 *   1 - (1 - v0/eps)(1 - psi/eps)^T          when eps >= psi/kappa
 *   (v0/eps)(1-kappa)^T + psi/(kappa eps)(1 - (1-kappa)^T)   otherwise
 * clamped to [0,1].
 */
double kushner_delta(double v0, double eps, double kappa, double psi, int horizon);

/* deviation guarantee 1 - delta evaluated at level alpha(eps) */
double closeness_probability(const BoundQuery& q);

struct ClosenessRow {
  double delta_bar = 0.0;
  double psi = 0.0;
  int branch = 0;
  double guarantee = 0.0;
};

/* sweep of the guarantee over discretization parameters, psi = coeff * delta_bar^2 */
std::vector<ClosenessRow> closeness_table(const Kinf& alpha, double kappa, double psi_coeff,
                                          const std::vector<double>& delta_bars, double eps,
                                          int horizon, double v0);

struct MemoryEstimate {
  double per_subsystem_gb = 0.0;
  double monolithic_log10_gb = 0.0;  /* exact in log space; the number itself overflows */
};

/* 8 bytes per kernel entry: per subsystem (n_x m n_w) n_x, monolithic (n_x^N m^N) n_x^N */
MemoryEstimate memory_estimate(std::uint64_t n_x, std::uint64_t n_w, std::uint64_t m,
                               std::uint64_t N);

void write_closeness_csv(const std::vector<ClosenessRow>& rows, const std::filesystem::path& path);

struct MemoryRow {
  double delta_bar = 0.0;
  std::uint64_t n_x = 0;
  MemoryEstimate estimate;
};

void write_memory_csv(const std::vector<MemoryRow>& rows, const std::filesystem::path& path);

}  // namespace smdp

#endif
