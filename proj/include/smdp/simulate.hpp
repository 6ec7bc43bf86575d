/*
 * simulate.hpp
 *
 * Monte Carlo closed-loop rollouts of the concrete network coupled with its
 * abstraction under shared noise and a shared refined switching signal, plus
 * the empirical deviation and safety statistics used to check the
 * theoretical bounds.
 */

#ifndef SMDP_SIMULATE_HPP_
#define SMDP_SIMULATE_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "smdp/grid.hpp"
#include "smdp/model.hpp"
#include "smdp/synthesis.hpp"

namespace smdp {

struct RolloutConfig {
  int runs = 1;
  int horizon = 0;
  std::uint64_t seed = 1;
  std::vector<Vector> init_concrete;
  std::vector<Vector> init_abstract;  /* empty: quantize init_concrete */
  std::vector<int> init_modes;        /* counter starts at 0 */
  unsigned threads = 0;
  int keep_paths = 0;                 /* store full trajectories for the first runs */
};

struct StoredPath {
  int run = 0;
  /* [step][subsystem] */
  std::vector<std::vector<Vector>> concrete;
  std::vector<std::vector<Vector>> abstract_rep;
  std::vector<std::vector<int>> mode;
  std::vector<std::vector<int>> counter;
};

struct PairedTrajectories {
  int runs = 0;
  int horizon = 0;
  /* per run: sup over steps of the max subsystem output deviation (inf-norm);
     +inf when a chain leaves the analyzed region */
  std::vector<double> sup_deviation;
  std::vector<std::uint8_t> concrete_safe;  /* stayed in the safe boxes over the horizon */
  std::vector<std::uint8_t> abstract_absorbed;
  std::vector<StoredPath> paths;
};

/*
 * Simulate both chains for each run. The refined controllers read the
 * concrete states; the same requests and the same noise realizations drive
 * the abstract chain. Safe boxes may be empty (safety then reports against
 * the state boxes).
 */
PairedTrajectories rollout_pair(const NetworkSpec& net,
                                const std::vector<const UniformGrid*>& state_grids,
                                const std::vector<const UniformGrid*>& input_grids,
                                const std::vector<const Policy*>& policies,
                                const RolloutConfig& cfg,
                                const std::vector<Box>& safe_boxes = {});

struct FractionEstimate {
  double fraction = 0.0;
  double standard_error = 0.0;
};

/* fraction of runs with sup deviation >= eps, with binomial standard error */
FractionEstimate empirical_deviation_probability(const PairedTrajectories& t, double eps);

/* fraction of runs whose concrete trajectory never left the safe boxes */
FractionEstimate empirical_safety(const PairedTrajectories& t);

/* deviation quantile over runs (q in [0,1]) */
double deviation_quantile(const PairedTrajectories& t, double q);

void write_trajectories_csv(const PairedTrajectories& t, const std::filesystem::path& path);

}  // namespace smdp

#endif
