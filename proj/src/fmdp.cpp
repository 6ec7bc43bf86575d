#include "smdp/fmdp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "smdp/parallel.hpp"

namespace smdp {

double normal_cdf(double z) {
  /* erfc keeps full precision in the tails, unlike 0.5*(1+erf) */
  return 0.5 * std::erfc(-z * 0.70710678118654752440);
}

namespace {

/* per-dimension cell window [first, last] and the CDF increments over it */
struct DimWindow {
  std::int64_t first = 0, last = -1;
  std::vector<double> mass;
};

DimWindow dim_window(const UniformGrid& g, int d, double mean, double sigma, double k_sigmas) {
  DimWindow w;
  const double lb = g.box().lb[d], ub = g.box().ub[d];
  if (sigma == 0.0) {
    /* deterministic coordinate: all mass on the cell containing the mean */
    if (mean < lb || mean > ub) return w;
    auto k = static_cast<std::int64_t>(std::floor((mean - lb) / g.width(d)));
    if (k < 0) k = 0;
    if (k >= g.count(d)) k = g.count(d) - 1;
    w.first = w.last = k;
    w.mass = {1.0};
    return w;
  }
  const double lo = std::max(lb, mean - k_sigmas * sigma);
  const double hi = std::min(ub, mean + k_sigmas * sigma);
  if (lo >= hi) return w;
  auto kf = static_cast<std::int64_t>(std::floor((lo - lb) / g.width(d)));
  auto kl = static_cast<std::int64_t>(std::floor((hi - lb) / g.width(d)));
  kf = std::max<std::int64_t>(0, std::min(kf, g.count(d) - 1));
  kl = std::max<std::int64_t>(0, std::min(kl, g.count(d) - 1));
  w.first = kf;
  w.last = kl;
  w.mass.resize(kl - kf + 1);
  double prev = normal_cdf((g.edge(d, kf) - mean) / sigma);
  for (std::int64_t k = kf; k <= kl; ++k) {
    const double next = normal_cdf((g.edge(d, k + 1) - mean) / sigma);
    w.mass[k - kf] = std::max(0.0, next - prev);
    prev = next;
  }
  return w;
}

}  // namespace

RowData transition_row(const SubsystemSpec& spec, const UniformGrid& state_grid,
                       std::int64_t x_cell, int mode, const Vector& w_rep,
                       const BuildOptions& opts) {
  const Vector mean = concrete_step(spec, state_grid.representative(x_cell), mode, w_rep,
                                    Vector::Zero(spec.n));
  const Vector sigma = spec.effective_sigma(mode);

  RowData row;
  std::vector<DimWindow> win(spec.n);
  for (int d = 0; d < spec.n; ++d) {
    win[d] = dim_window(state_grid, d, mean[d], sigma[d], opts.window_sigmas);
    if (win[d].mass.empty()) {  /* no in-box mass in some dimension */
      row.absorbing = 1.0;
      return row;
    }
  }

  /* tensor product over the per-dimension windows */
  std::vector<std::int64_t> idx(spec.n);
  for (int d = 0; d < spec.n; ++d) idx[d] = 0;
  double kept = 0.0;
  while (true) {
    double p = 1.0;
    for (int d = 0; d < spec.n; ++d) p *= win[d].mass[idx[d]];
    if (p >= opts.sparsity_floor) {
      std::int64_t cell = 0, stride = 1;
      for (int d = 0; d < spec.n; ++d) {
        cell += (win[d].first + idx[d]) * stride;
        stride *= state_grid.count(d);
      }
      row.cols.push_back(static_cast<std::uint32_t>(cell));
      row.probs.push_back(p);
      kept += p;
    }
    int d = 0;
    while (d < spec.n) {
      if (++idx[d] < static_cast<std::int64_t>(win[d].mass.size())) break;
      idx[d] = 0;
      ++d;
    }
    if (d == spec.n) break;
  }
  row.absorbing = std::max(0.0, 1.0 - kept);
  return row;
}

std::uint64_t estimate_build_bytes(const SubsystemSpec& spec, const UniformGrid& state_grid,
                                   const UniformGrid& input_grid, const BuildOptions& opts) {
  const auto rows = static_cast<std::uint64_t>(state_grid.cell_count()) * spec.mode_count() *
                    input_grid.cell_count();
  double worst_sigma = 0.0;
  for (int p = 0; p < spec.mode_count(); ++p)
    worst_sigma = std::max(worst_sigma, spec.effective_sigma(p).maxCoeff());
  std::uint64_t window = 1;
  for (int d = 0; d < state_grid.dim(); ++d) {
    std::uint64_t cells_d = 1;
    if (worst_sigma > 0.0)
      cells_d = std::min<std::uint64_t>(
          state_grid.count(d),
          static_cast<std::uint64_t>(2.0 * opts.window_sigmas * worst_sigma / state_grid.width(d)) + 2);
    window *= cells_d;
  }
  return rows * (16 + window * 12);  /* offsets + absorbing + (u32,f64) entries */
}

FiniteMdp build_finite_mdp(const SubsystemSpec& spec, const UniformGrid& state_grid,
                           const UniformGrid& input_grid, const BuildOptions& opts) {
  spec.validate();
  if (state_grid.dim() != spec.n || input_grid.dim() != spec.p_bar)
    throw std::invalid_argument("build_finite_mdp: grid dimensions do not match the subsystem");
  if (state_grid.cell_count() > (std::int64_t{1} << 31))
    throw std::invalid_argument("build_finite_mdp: state grid too large for 32-bit cell indices");

  const std::uint64_t estimate = estimate_build_bytes(spec, state_grid, input_grid, opts);
  if (estimate > opts.memory_cap_bytes)
    throw MemoryCapError("build_finite_mdp: estimated storage " + std::to_string(estimate) +
                             " bytes exceeds the configured cap of " +
                             std::to_string(opts.memory_cap_bytes) + " bytes",
                         estimate);

  const std::int64_t n_x = state_grid.cell_count();
  const std::int64_t n_w = input_grid.cell_count();
  const int m = spec.mode_count();
  const std::int64_t rows = n_x * m * n_w;

  std::vector<RowData> data(rows);
  parallel_for(rows, opts.threads, [&](std::int64_t r) {
    const std::int64_t w_cell = r % n_w;
    const int mode = static_cast<int>((r / n_w) % m);
    const std::int64_t x_cell = r / (n_w * m);
    data[r] = transition_row(spec, state_grid, x_cell, mode, input_grid.representative(w_cell), opts);
  });

  return FiniteMdp::from_rows(state_grid, input_grid, m, data);
}

FiniteMdp FiniteMdp::from_rows(UniformGrid state_grid, UniformGrid input_grid, int modes,
                               const std::vector<RowData>& rows) {
  FiniteMdp mdp;
  mdp.state_grid_ = std::move(state_grid);
  mdp.input_grid_ = std::move(input_grid);
  mdp.modes_ = modes;
  const auto expected = static_cast<std::size_t>(mdp.state_grid_.cell_count()) * modes *
                        mdp.input_grid_.cell_count();
  if (rows.size() != expected)
    throw std::invalid_argument("FiniteMdp::from_rows: row count mismatch");
  std::uint64_t nnz = 0;
  for (const auto& r : rows) nnz += r.cols.size();
  mdp.offsets_.resize(rows.size() + 1);
  mdp.cols_.reserve(nnz);
  mdp.probs_.reserve(nnz);
  mdp.absorbing_.resize(rows.size());
  std::uint64_t off = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    mdp.offsets_[r] = off;
    mdp.cols_.insert(mdp.cols_.end(), rows[r].cols.begin(), rows[r].cols.end());
    mdp.probs_.insert(mdp.probs_.end(), rows[r].probs.begin(), rows[r].probs.end());
    mdp.absorbing_[r] = rows[r].absorbing;
    off += rows[r].cols.size();
  }
  mdp.offsets_.back() = off;
  return mdp;
}

FiniteMdp::RowView FiniteMdp::row_at(std::int64_t r) const {
  if (r < 0 || r >= row_count()) throw std::invalid_argument("FiniteMdp: row index out of range");
  const auto b = offsets_[r], e = offsets_[r + 1];
  return RowView{std::span<const std::uint32_t>(cols_.data() + b, e - b),
                 std::span<const double>(probs_.data() + b, e - b), absorbing_[r]};
}

FiniteMdp::RowView FiniteMdp::row(std::int64_t x_cell, int mode, std::int64_t w_cell) const {
  return row_at(row_index(x_cell, mode, w_cell));
}

UniformGrid::Quantized abstract_step(const UniformGrid& state_grid, const SubsystemSpec& spec,
                                     const Vector& x_rep, int mode, const Vector& w_rep,
                                     const Vector& noise) {
  return state_grid.quantize(concrete_step(spec, x_rep, mode, w_rep, noise));
}

/* ---- persistence ------------------------------------------------------ */

namespace {

constexpr char kMagic[4] = {'F', 'M', 'D', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IntegrityError("finite MDP file truncated");
  return v;
}

void put_grid(std::ostream& os, const UniformGrid& g) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim()));
  for (int d = 0; d < g.dim(); ++d) {
    put<double>(os, g.box().lb[d]);
    put<double>(os, g.box().ub[d]);
    put<std::int64_t>(os, g.count(d));
  }
}

UniformGrid get_grid(std::istream& is) {
  const auto dim = get<std::uint32_t>(is);
  if (dim == 0 || dim > 64) throw IntegrityError("finite MDP file: bad grid dimension");
  Vector lb(dim), ub(dim);
  std::vector<std::int64_t> counts(dim);
  for (std::uint32_t d = 0; d < dim; ++d) {
    lb[d] = get<double>(is);
    ub[d] = get<double>(is);
    counts[d] = get<std::int64_t>(is);
  }
  return UniformGrid::with_counts(Box(lb, ub), counts);
}

}  // namespace

void FiniteMdp::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put_grid(os, state_grid_);
  put_grid(os, input_grid_);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(modes_));
  put<std::uint64_t>(os, absorbing_.size());
  put<std::uint64_t>(os, cols_.size());
  os.write(reinterpret_cast<const char*>(offsets_.data()),
           static_cast<std::streamsize>(offsets_.size() * sizeof(std::uint64_t)));
  os.write(reinterpret_cast<const char*>(absorbing_.data()),
           static_cast<std::streamsize>(absorbing_.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(cols_.data()),
           static_cast<std::streamsize>(cols_.size() * sizeof(std::uint32_t)));
  os.write(reinterpret_cast<const char*>(probs_.data()),
           static_cast<std::streamsize>(probs_.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

FiniteMdp FiniteMdp::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IntegrityError("not a finite MDP file: " + path.string());
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion)
    throw IntegrityError("finite MDP file version " + std::to_string(version) +
                         " unsupported (expected " + std::to_string(kVersion) + ")");
  FiniteMdp mdp;
  mdp.state_grid_ = get_grid(is);
  mdp.input_grid_ = get_grid(is);
  mdp.modes_ = static_cast<int>(get<std::uint32_t>(is));
  const auto rows = get<std::uint64_t>(is);
  const auto nnz = get<std::uint64_t>(is);
  const auto expected = static_cast<std::uint64_t>(mdp.state_grid_.cell_count()) * mdp.modes_ *
                        mdp.input_grid_.cell_count();
  if (rows != expected) throw IntegrityError("finite MDP file: row count inconsistent with grids");
  mdp.offsets_.resize(rows + 1);
  mdp.absorbing_.resize(rows);
  mdp.cols_.resize(nnz);
  mdp.probs_.resize(nnz);
  is.read(reinterpret_cast<char*>(mdp.offsets_.data()),
          static_cast<std::streamsize>(mdp.offsets_.size() * sizeof(std::uint64_t)));
  is.read(reinterpret_cast<char*>(mdp.absorbing_.data()),
          static_cast<std::streamsize>(mdp.absorbing_.size() * sizeof(double)));
  is.read(reinterpret_cast<char*>(mdp.cols_.data()),
          static_cast<std::streamsize>(mdp.cols_.size() * sizeof(std::uint32_t)));
  is.read(reinterpret_cast<char*>(mdp.probs_.data()),
          static_cast<std::streamsize>(mdp.probs_.size() * sizeof(double)));
  if (!is) throw IntegrityError("finite MDP file truncated: " + path.string());
  if (mdp.offsets_.back() != nnz)
    throw IntegrityError("finite MDP file: offset table inconsistent");
  return mdp;
}

void FiniteMdp::export_rows_csv(const std::filesystem::path& path, std::int64_t max_rows) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "row,x_cell,mode,w_cell,target_cell,probability\n";
  os.precision(17);
  const std::int64_t limit = max_rows < 0 ? row_count() : std::min(max_rows, row_count());
  const std::int64_t n_w = input_grid_.cell_count();
  for (std::int64_t r = 0; r < limit; ++r) {
    const std::int64_t w_cell = r % n_w;
    const int mode = static_cast<int>((r / n_w) % modes_);
    const std::int64_t x_cell = r / (n_w * modes_);
    auto view = row_at(r);
    for (std::size_t k = 0; k < view.cols.size(); ++k)
      os << r << ',' << x_cell << ',' << mode << ',' << w_cell << ',' << view.cols[k] << ','
         << view.probs[k] << '\n';
    os << r << ',' << x_cell << ',' << mode << ',' << w_cell << ",absorbing," << view.absorbing
       << '\n';
  }
}

}  // namespace smdp
