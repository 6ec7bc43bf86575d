/*
 * fmdp.hpp
 *
 * Finite MDP abstraction of one switched subsystem. A row is the exact
 * Gaussian transition distribution from (state cell, mode, internal input
 * cell) over the state cells, with all unassigned mass folded into a single
 * absorbing state.
 *
 * Storage is CSR-like: one offset per row into shared column/probability
 * arrays, plus one absorbing-mass scalar per row. Rows are indexed
 * (cell * modes + mode) * n_w + input_cell.
 */

#ifndef SMDP_FMDP_HPP_
#define SMDP_FMDP_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "smdp/grid.hpp"
#include "smdp/model.hpp"

namespace smdp {

class MemoryCapError : public std::runtime_error {
 public:
  MemoryCapError(const std::string& what, std::uint64_t estimate)
      : std::runtime_error(what), estimated_bytes(estimate) {}
  std::uint64_t estimated_bytes;
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BuildOptions {
  double window_sigmas = 8.0;     /* per-dimension integration window around the mean */
  double sparsity_floor = 1e-12;  /* entries below this go to the absorber */
  std::uint64_t memory_cap_bytes = 4ull << 30;
  unsigned threads = 0;
};

struct RowData {
  std::vector<std::uint32_t> cols;
  std::vector<double> probs;
  double absorbing = 0.0;
};

/* exact cell probabilities of the noisy successor of (x_cell, mode, w_rep) */
RowData transition_row(const SubsystemSpec& spec, const UniformGrid& state_grid,
                       std::int64_t x_cell, int mode, const Vector& w_rep,
                       const BuildOptions& opts = {});

class FiniteMdp {
 public:
  struct RowView {
    std::span<const std::uint32_t> cols;
    std::span<const double> probs;
    double absorbing = 0.0;
  };

  FiniteMdp() = default;

  const UniformGrid& state_grid() const { return state_grid_; }
  const UniformGrid& input_grid() const { return input_grid_; }
  int modes() const { return modes_; }
  std::int64_t row_count() const { return static_cast<std::int64_t>(absorbing_.size()); }
  std::uint64_t entry_count() const { return cols_.size(); }

  std::int64_t row_index(std::int64_t x_cell, int mode, std::int64_t w_cell) const {
    return (x_cell * modes_ + mode) * input_grid_.cell_count() + w_cell;
  }
  RowView row(std::int64_t x_cell, int mode, std::int64_t w_cell) const;
  RowView row_at(std::int64_t row) const;

  void save(const std::filesystem::path& path) const;
  static FiniteMdp load(const std::filesystem::path& path);

  /* debugging aid: one line per kept entry */
  void export_rows_csv(const std::filesystem::path& path, std::int64_t max_rows = -1) const;

  /* assemble from per-row data (also the test seam for toy MDPs) */
  static FiniteMdp from_rows(UniformGrid state_grid, UniformGrid input_grid, int modes,
                             const std::vector<RowData>& rows);

 private:
  UniformGrid state_grid_, input_grid_;
  int modes_ = 0;
  std::vector<std::uint64_t> offsets_;
  std::vector<std::uint32_t> cols_;
  std::vector<double> probs_;
  std::vector<double> absorbing_;
};

/* estimated peak storage of build_finite_mdp, used for the refusal gate */
std::uint64_t estimate_build_bytes(const SubsystemSpec& spec, const UniformGrid& state_grid,
                                   const UniformGrid& input_grid, const BuildOptions& opts = {});

FiniteMdp build_finite_mdp(const SubsystemSpec& spec, const UniformGrid& state_grid,
                           const UniformGrid& input_grid, const BuildOptions& opts = {});

/* one-step abstract dynamics: quantized noisy successor of a representative */
UniformGrid::Quantized abstract_step(const UniformGrid& state_grid, const SubsystemSpec& spec,
                                     const Vector& x_rep, int mode, const Vector& w_rep,
                                     const Vector& noise);

/* standard normal CDF */
double normal_cdf(double z);

}  // namespace smdp

#endif
