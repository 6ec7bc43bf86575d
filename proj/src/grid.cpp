#include "smdp/grid.hpp"

#include <cmath>

namespace smdp {

void UniformGrid::finish() {
  const int n = dim();
  width_.resize(n);
  cells_ = 1;
  diameter_ = 0.0;
  for (int d = 0; d < n; ++d) {
    width_[d] = (box_.ub[d] - box_.lb[d]) / static_cast<double>(count_[d]);
    if (!(width_[d] > 0.0))
      throw std::invalid_argument("UniformGrid: degenerate cell width in dimension " + std::to_string(d));
    cells_ *= count_[d];
    diameter_ = std::max(diameter_, width_[d]);
  }
}

UniformGrid UniformGrid::with_target_diameter(const Box& box, double target) {
  if (box.dim() == 0) throw std::invalid_argument("UniformGrid: empty box");
  if (!(target > 0.0)) throw std::invalid_argument("UniformGrid: target diameter must be > 0");
  UniformGrid g;
  g.box_ = box;
  g.count_.resize(box.dim());
  for (int d = 0; d < box.dim(); ++d) {
    const double span = box.ub[d] - box.lb[d];
    /* epsilon guard keeps exact ratios (20/0.02 = 1000) from rounding up */
    g.count_[d] = static_cast<std::int64_t>(std::ceil(span / target - 1e-9));
    if (g.count_[d] < 1) g.count_[d] = 1;
  }
  g.finish();
  return g;
}

UniformGrid UniformGrid::with_counts(const Box& box, const std::vector<std::int64_t>& counts) {
  if (box.dim() == 0) throw std::invalid_argument("UniformGrid: empty box");
  if (static_cast<int>(counts.size()) != box.dim())
    throw std::invalid_argument("UniformGrid: count vector dimension mismatch");
  for (auto c : counts)
    if (c < 1) throw std::invalid_argument("UniformGrid: cell counts must be >= 1");
  UniformGrid g;
  g.box_ = box;
  g.count_ = counts;
  g.finish();
  return g;
}

std::optional<std::int64_t> UniformGrid::locate(const Vector& x) const {
  if (x.size() != dim()) throw std::invalid_argument("UniformGrid: point dimension mismatch");
  std::int64_t cell = 0, stride = 1;
  for (int d = 0; d < dim(); ++d) {
    if (x[d] < box_.lb[d] || x[d] > box_.ub[d]) return std::nullopt;
    auto k = static_cast<std::int64_t>(std::floor((x[d] - box_.lb[d]) / width_[d]));
    if (k < 0) k = 0;
    if (k >= count_[d]) k = count_[d] - 1;  /* upper face belongs to the last cell */
    cell += k * stride;
    stride *= count_[d];
  }
  return cell;
}

UniformGrid::Quantized UniformGrid::quantize(const Vector& x) const {
  Quantized q;
  auto cell = locate(x);
  if (!cell) return q;
  q.in_box = true;
  q.cell = *cell;
  q.rep = representative(*cell);
  return q;
}

std::int64_t UniformGrid::nearest_cell(const Vector& x) const {
  return *locate(box_.clamp(x));
}

Vector UniformGrid::representative(std::int64_t cell) const {
  auto idx = unflatten(cell);
  Vector rep(dim());
  for (int d = 0; d < dim(); ++d)
    rep[d] = box_.lb[d] + (static_cast<double>(idx[d]) + 0.5) * width_[d];
  return rep;
}

void UniformGrid::cell_bounds(std::int64_t cell, Vector& lo, Vector& hi) const {
  auto idx = unflatten(cell);
  lo.resize(dim());
  hi.resize(dim());
  for (int d = 0; d < dim(); ++d) {
    lo[d] = edge(d, idx[d]);
    hi[d] = edge(d, idx[d] + 1);
  }
}

std::int64_t UniformGrid::flatten(const std::vector<std::int64_t>& idx) const {
  std::int64_t cell = 0, stride = 1;
  for (int d = 0; d < dim(); ++d) {
    cell += idx[d] * stride;
    stride *= count_[d];
  }
  return cell;
}

std::vector<std::int64_t> UniformGrid::unflatten(std::int64_t cell) const {
  if (cell < 0 || cell >= cells_) throw std::invalid_argument("UniformGrid: cell index out of range");
  std::vector<std::int64_t> idx(dim());
  for (int d = 0; d < dim(); ++d) {
    idx[d] = cell % count_[d];
    cell /= count_[d];
  }
  return idx;
}

bool UniformGrid::same_layout(const UniformGrid& other, double tol) const {
  if (dim() != other.dim()) return false;
  for (int d = 0; d < dim(); ++d) {
    if (count_[d] != other.count_[d]) return false;
    if (std::abs(box_.lb[d] - other.box_.lb[d]) > tol) return false;
    if (std::abs(box_.ub[d] - other.box_.ub[d]) > tol) return false;
  }
  return true;
}

}  // namespace smdp
