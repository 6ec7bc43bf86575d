#include "smdp/synthesis.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "smdp/parallel.hpp"

namespace smdp {

Policy::Policy(UniformGrid grid, int modes, int dwell_time, int horizon)
    : grid_(std::move(grid)), modes_(modes), dwell_time_(dwell_time), horizon_(horizon) {
  if (modes_ < 1 || modes_ > 255) throw std::invalid_argument("Policy: mode count out of range");
  if (dwell_time_ < 1) throw std::invalid_argument("Policy: dwell time must be >= 1");
  if (horizon_ < 0) throw std::invalid_argument("Policy: negative horizon");
  const auto aug = static_cast<std::size_t>(grid_.cell_count()) * modes_ * dwell_time_;
  choice_.assign(aug * std::max(horizon_, 1), 0);
  value0_.assign(aug, 0.0);
}

int Policy::mode_choice(std::int64_t cell, int mode, int counter, int step) const {
  if (cell < 0 || cell >= grid_.cell_count() || mode < 0 || mode >= modes_ || counter < 0 ||
      counter >= dwell_time_ || step < 0 || step >= std::max(horizon_, 1))
    throw std::out_of_range("Policy::mode_choice: index outside the policy tables");
  return choice_[augmented_index(cell, mode, counter) * std::max(horizon_, 1) + step];
}

void Policy::set_choice(std::int64_t cell, int mode, int counter, int step, int requested) {
  choice_[augmented_index(cell, mode, counter) * std::max(horizon_, 1) + step] =
      static_cast<std::uint8_t>(requested);
}

double Policy::value(std::int64_t cell, int mode, int counter) const {
  return value0_[augmented_index(cell, mode, counter)];
}

SynthesisResult safety_value_iteration(const FiniteMdp& mdp, const SafetySpec& spec, int dwell_time,
                                       const SynthesisOptions& opts) {
  const UniformGrid& grid = mdp.state_grid();
  if (spec.safe_box.dim() != grid.dim())
    throw std::invalid_argument("safety_value_iteration: safe box dimension mismatch");
  if (dwell_time < 1) throw std::invalid_argument("safety_value_iteration: dwell time must be >= 1");

  const std::int64_t n_x = grid.cell_count();
  const int m = mdp.modes();
  const int kd = dwell_time;
  const std::int64_t n_w = mdp.input_grid().cell_count();
  const std::int64_t aug = n_x * m * kd;
  const int T = spec.horizon;

  /* safe-set membership of cell representatives */
  std::vector<std::uint8_t> safe(n_x);
  for (std::int64_t c = 0; c < n_x; ++c)
    safe[c] = spec.safe_box.contains(grid.representative(c)) ? 1 : 0;

  SynthesisResult res;
  res.policy = Policy(grid, m, kd, T);
  res.values.assign(T + 1, std::vector<double>(aug, 0.0));

  auto& terminal = res.values[T];
  for (std::int64_t c = 0; c < n_x; ++c)
    for (int p = 0; p < m; ++p)
      for (int l = 0; l < kd; ++l)
        terminal[(c * m + p) * kd + l] = safe[c];

  for (int k = T - 1; k >= 0; --k) {
    const auto& next = res.values[k + 1];
    auto& cur = res.values[k];
    parallel_for(n_x, opts.threads, [&](std::int64_t c) {
      for (int p = 0; p < m; ++p)
        for (int l = 0; l < kd; ++l) {
          const std::int64_t a = (c * m + p) * kd + l;
          if (!safe[c]) {
            cur[a] = 0.0;
            res.policy.set_choice(c, p, l, k, p);
            continue;
          }
          double best = -1.0;
          int best_mode = p;
          for (int req : admissible_modes({p, l}, kd, m)) {
            const auto mc = dwell_step({p, l}, req, kd);
            /* continuation slice for the successor automaton state */
            const std::int64_t slice = static_cast<std::int64_t>(mc.mode) * kd + mc.counter;
            double extreme = opts.cooperative ? -1.0 : 2.0;
            for (std::int64_t wc = 0; wc < n_w; ++wc) {
              auto row = mdp.row(c, mc.mode, wc);
              double acc = 0.0;  /* absorbing successor contributes 0 */
              for (std::size_t e = 0; e < row.cols.size(); ++e)
                acc += row.probs[e] * next[static_cast<std::int64_t>(row.cols[e]) * m * kd + slice];
              extreme = opts.cooperative ? std::max(extreme, acc) : std::min(extreme, acc);
            }
            if (extreme > best + 1e-15) {  /* strict improvement keeps the lowest index on ties */
              best = extreme;
              best_mode = req;
            }
          }
          cur[a] = best;
          res.policy.set_choice(c, p, l, k, best_mode);
        }
    });
  }
  res.policy.value_table() = res.values[0];
  return res;
}

int RefinedController::operator()(const Vector& x, int mode, int counter, int step) const {
  auto q = policy_->grid().quantize(x);
  if (!q.in_box) return mode;  /* leave the analyzed region: hold the current mode */
  return policy_->mode_choice(q.cell, mode, counter, step);
}

RefinedController refine_policy(const Policy& policy, const UniformGrid& grid) {
  if (!policy.grid().same_layout(grid))
    throw std::invalid_argument("refine_policy: policy grid does not match the subsystem grid");
  return RefinedController(policy);
}

/* ---- persistence ------------------------------------------------------ */

namespace {

constexpr char kMagic[4] = {'S', 'P', 'O', 'L'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IntegrityError("policy file truncated");
  return v;
}

}  // namespace

void Policy::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(grid_.dim()));
  for (int d = 0; d < grid_.dim(); ++d) {
    put<double>(os, grid_.box().lb[d]);
    put<double>(os, grid_.box().ub[d]);
    put<std::int64_t>(os, grid_.count(d));
  }
  put<std::uint32_t>(os, static_cast<std::uint32_t>(modes_));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(dwell_time_));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(horizon_));
  put<std::uint64_t>(os, choice_.size());
  os.write(reinterpret_cast<const char*>(choice_.data()),
           static_cast<std::streamsize>(choice_.size()));
  put<std::uint64_t>(os, value0_.size());
  os.write(reinterpret_cast<const char*>(value0_.data()),
           static_cast<std::streamsize>(value0_.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

Policy Policy::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IntegrityError("not a policy file: " + path.string());
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion)
    throw IntegrityError("policy file version " + std::to_string(version) + " unsupported");
  const auto dim = get<std::uint32_t>(is);
  if (dim == 0 || dim > 64) throw IntegrityError("policy file: bad grid dimension");
  Vector lb(dim), ub(dim);
  std::vector<std::int64_t> counts(dim);
  for (std::uint32_t d = 0; d < dim; ++d) {
    lb[d] = get<double>(is);
    ub[d] = get<double>(is);
    counts[d] = get<std::int64_t>(is);
  }
  const auto modes = get<std::uint32_t>(is);
  const auto kd = get<std::uint32_t>(is);
  const auto horizon = get<std::uint32_t>(is);
  Policy pol(UniformGrid::with_counts(Box(lb, ub), counts), static_cast<int>(modes),
             static_cast<int>(kd), static_cast<int>(horizon));
  const auto n_choice = get<std::uint64_t>(is);
  if (n_choice != pol.choice_.size()) throw IntegrityError("policy file: choice table size");
  is.read(reinterpret_cast<char*>(pol.choice_.data()), static_cast<std::streamsize>(n_choice));
  const auto n_val = get<std::uint64_t>(is);
  if (n_val != pol.value0_.size()) throw IntegrityError("policy file: value table size");
  is.read(reinterpret_cast<char*>(pol.value0_.data()),
          static_cast<std::streamsize>(n_val * sizeof(double)));
  if (!is) throw IntegrityError("policy file truncated: " + path.string());
  return pol;
}

void Policy::export_value_csv(const std::filesystem::path& path, int mode, int counter) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.precision(17);
  os << "cell";
  for (int d = 0; d < grid_.dim(); ++d) os << ",x" << d;
  os << ",mode,counter,value,choice0\n";
  for (std::int64_t c = 0; c < grid_.cell_count(); ++c) {
    const Vector rep = grid_.representative(c);
    os << c;
    for (int d = 0; d < grid_.dim(); ++d) os << ',' << rep[d];
    os << ',' << mode << ',' << counter << ',' << value(c, mode, counter) << ','
       << (horizon_ > 0 ? mode_choice(c, mode, counter, 0) : mode) << '\n';
  }
}

}  // namespace smdp
