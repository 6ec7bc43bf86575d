/*
 * grid.hpp
 *
 * Uniform hyper-interval partitions of a box with cell-center representative
 * points. Cells are half-open [lo, hi) in every dimension, except that the
 * upper face of the box belongs to the last cell, so the quantizer is a
 * total deterministic map on the box.
 *
 * The certified discretization parameter is the infinity-norm cell diameter
 * (the maximum per-dimension width); with center representatives the actual
 * quantization error is at most half of it.
 */

#ifndef SMDP_GRID_HPP_
#define SMDP_GRID_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "smdp/model.hpp"

namespace smdp {

class UniformGrid {
 public:
  UniformGrid() = default;

  /* cell widths <= target diameter in every dimension (ceiling division) */
  static UniformGrid with_target_diameter(const Box& box, double target);
  static UniformGrid with_counts(const Box& box, const std::vector<std::int64_t>& counts);

  int dim() const { return static_cast<int>(count_.size()); }
  std::int64_t cell_count() const { return cells_; }
  double diameter() const { return diameter_; } /* max per-dimension width */
  double width(int d) const { return width_[d]; }
  std::int64_t count(int d) const { return count_[d]; }
  const Box& box() const { return box_; }

  /* cell index of x, or nullopt when x lies outside the box */
  std::optional<std::int64_t> locate(const Vector& x) const;

  struct Quantized {
    bool in_box = false;     /* false = absorbing marker */
    std::int64_t cell = -1;
    Vector rep;              /* cell center; empty when absorbing */
  };

  Quantized quantize(const Vector& x) const;

  /* clamp x into the box first; total on all of R^n */
  std::int64_t nearest_cell(const Vector& x) const;

  Vector representative(std::int64_t cell) const;
  void cell_bounds(std::int64_t cell, Vector& lo, Vector& hi) const;

  /* per-dimension edge lb + k*width, k in [0, count] */
  double edge(int d, std::int64_t k) const { return box_.lb[d] + static_cast<double>(k) * width_[d]; }

  /* decompose / compose flat indices (dimension 0 varies fastest) */
  std::int64_t flatten(const std::vector<std::int64_t>& idx) const;
  std::vector<std::int64_t> unflatten(std::int64_t cell) const;

  bool same_layout(const UniformGrid& other, double tol = 0.0) const;

 private:
  Box box_;
  std::vector<std::int64_t> count_;
  Vector width_;
  std::int64_t cells_ = 0;
  double diameter_ = 0.0;

  void finish();
};

}  // namespace smdp

#endif
