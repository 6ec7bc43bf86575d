/*
 * synthesis.hpp
 *
 * Finite-horizon safety controller synthesis over a per-subsystem finite
 * MDP with dwell-time-augmented state (cell, mode, counter), treating the
 * quantized internal input as an adversarial disturbance, and refinement of
 * the abstract policy to the concrete subsystem through the quantizer.
 */

#ifndef SMDP_SYNTHESIS_HPP_
#define SMDP_SYNTHESIS_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "smdp/fmdp.hpp"
#include "smdp/grid.hpp"
#include "smdp/model.hpp"

namespace smdp {

struct SafetySpec {
  Box safe_box;     /* must be contained in the state box */
  int horizon = 0;
};

/*
 * Time-varying switching policy. Choices are indexed by (cell, mode,
 * counter, step); the value table is the safety probability guaranteed
 * against any disturbance in the input grid from step 0.
 */
class Policy {
 public:
  Policy() = default;
  Policy(UniformGrid grid, int modes, int dwell_time, int horizon);

  const UniformGrid& grid() const { return grid_; }
  int modes() const { return modes_; }
  int dwell_time() const { return dwell_time_; }
  int horizon() const { return horizon_; }

  std::int64_t augmented_index(std::int64_t cell, int mode, int counter) const {
    return (cell * modes_ + mode) * dwell_time_ + counter;
  }

  int mode_choice(std::int64_t cell, int mode, int counter, int step) const;
  /* stationary extraction: the step-0 choice */
  int stationary_choice(std::int64_t cell, int mode, int counter) const {
    return horizon_ > 0 ? mode_choice(cell, mode, counter, 0) : mode;
  }
  void set_choice(std::int64_t cell, int mode, int counter, int step, int requested);

  double value(std::int64_t cell, int mode, int counter) const;
  std::vector<double>& value_table() { return value0_; }
  const std::vector<double>& value_table() const { return value0_; }

  void save(const std::filesystem::path& path) const;
  static Policy load(const std::filesystem::path& path);

  /* value slice at a fixed (mode, counter), one row per cell */
  void export_value_csv(const std::filesystem::path& path, int mode, int counter) const;

 private:
  UniformGrid grid_;
  int modes_ = 0, dwell_time_ = 1, horizon_ = 0;
  std::vector<std::uint8_t> choice_;
  std::vector<double> value0_;
};

struct SynthesisOptions {
  bool cooperative = false;  /* diagnostics only: best-case disturbance */
  unsigned threads = 0;
};

struct SynthesisResult {
  /* values[k] over augmented states, k = 0..horizon */
  std::vector<std::vector<double>> values;
  Policy policy;
};

/*
 * Backward max-min recursion. The terminal value is the safe-set indicator;
 * each step maximizes over dwell-admissible mode requests and minimizes over
 * the finite disturbance set, with the absorbing state pinned unsafe. Ties
 * break toward the lowest mode index.
 */
SynthesisResult safety_value_iteration(const FiniteMdp& mdp, const SafetySpec& spec, int dwell_time,
                                       const SynthesisOptions& opts = {});

/* concrete controller: look the abstract choice up through the quantizer;
   out-of-box states fall back to staying in the current mode */
class RefinedController {
 public:
  explicit RefinedController(const Policy& policy) : policy_(&policy) {}
  int operator()(const Vector& x, int mode, int counter, int step) const;

 private:
  const Policy* policy_;
};

RefinedController refine_policy(const Policy& policy, const UniformGrid& grid);

}  // namespace smdp

#endif
