#include "smdp/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace smdp {

Box::Box(Vector lo, Vector hi) : lb(std::move(lo)), ub(std::move(hi)) {
  if (lb.size() != ub.size())
    throw std::invalid_argument("Box: bound dimensions differ");
  for (int d = 0; d < lb.size(); ++d)
    if (!(lb[d] < ub[d]))
      throw std::invalid_argument("Box: empty or degenerate in dimension " + std::to_string(d));
}

Box Box::interval(double lo, double hi) {
  Vector l(1), u(1);
  l << lo; u << hi;
  return Box(l, u);
}

Box Box::cube(int dim, double lo, double hi) {
  return Box(Vector::Constant(dim, lo), Vector::Constant(dim, hi));
}

bool Box::contains(const Vector& x, double tol) const {
  if (x.size() != lb.size()) return false;
  for (int d = 0; d < x.size(); ++d)
    if (x[d] < lb[d] - tol || x[d] > ub[d] + tol) return false;
  return true;
}

Vector Box::clamp(const Vector& x) const {
  return x.cwiseMax(lb).cwiseMin(ub);
}

NoiseModel NoiseModel::standard_normal(int dim) {
  NoiseModel m;
  m.kind = NoiseKind::StandardNormal;
  m.sigma = Vector::Ones(dim);
  return m;
}

NoiseModel NoiseModel::scaled_normal(Vector sigma) {
  for (int d = 0; d < sigma.size(); ++d)
    if (!(sigma[d] > 0.0))
      throw std::invalid_argument("NoiseModel: sigma entries must be > 0");
  NoiseModel m;
  m.kind = NoiseKind::ScaledNormal;
  m.sigma = std::move(sigma);
  return m;
}

NoiseModel NoiseModel::none(int dim) {
  NoiseModel m;
  m.kind = NoiseKind::None;
  m.sigma = Vector::Zero(dim);
  return m;
}

Vector NoiseModel::base_sigma(int dim) const {
  switch (kind) {
    case NoiseKind::StandardNormal: return Vector::Ones(dim);
    case NoiseKind::ScaledNormal:
      if (sigma.size() != dim)
        throw std::invalid_argument("NoiseModel: sigma dimension mismatch");
      return sigma;
    case NoiseKind::None: return Vector::Zero(dim);
  }
  return Vector::Zero(dim);
}

Nonlinearity Nonlinearity::none() {
  Nonlinearity p;
  p.kind = PhiKind::None;
  return p;
}

Nonlinearity Nonlinearity::sine() {
  Nonlinearity p;
  p.kind = PhiKind::Sine;
  p.slope_bound = 1.0;
  return p;
}

Nonlinearity Nonlinearity::custom(std::function<double(double)> f, double slope_bound) {
  if (!(slope_bound > 0.0))
    throw std::invalid_argument("Nonlinearity: slope bound must be > 0 (may be +inf)");
  Nonlinearity p;
  p.kind = PhiKind::Custom;
  p.slope_bound = slope_bound;
  p.fn = std::move(f);
  return p;
}

double Nonlinearity::operator()(double s) const {
  switch (kind) {
    case PhiKind::None: return 0.0;
    case PhiKind::Sine: return std::sin(s);
    case PhiKind::Custom: return fn(s);
  }
  return 0.0;
}

SlopeCheckReport check_slope_restriction(const Nonlinearity& phi, int samples,
                                         double range, uint64_t seed) {
  SlopeCheckReport rep;
  if (phi.kind == PhiKind::None) return rep;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-range, range);
  for (int i = 0; i < samples; ++i) {
    double c = u(gen), d = u(gen);
    if (std::abs(c - d) < 1e-9) continue;
    double slope = (phi(c) - phi(d)) / (c - d);
    ++rep.samples;
    if (std::abs(slope) > std::abs(rep.worst_slope)) rep.worst_slope = slope;
    if (std::abs(slope) > phi.slope_bound + 1e-9) ++rep.two_sided_violations;
    if (slope < -1e-9) ++rep.one_sided_violations;
  }
  return rep;
}

ModeDynamics ModeDynamics::linear(Matrix A, Vector B, Matrix D, Matrix R) {
  ModeDynamics m;
  const auto n = A.rows();
  m.A = std::move(A);
  m.B = std::move(B);
  m.D = std::move(D);
  m.E = Matrix::Zero(n, 0);
  m.F = Matrix::Zero(0, n);
  m.R = std::move(R);
  m.phi = Nonlinearity::none();
  return m;
}

void SubsystemSpec::validate() const {
  if (n <= 0) throw std::invalid_argument("SubsystemSpec: state dimension must be positive");
  if (modes.empty()) throw std::invalid_argument("SubsystemSpec: no modes");
  if (dwell_time < 1) throw std::invalid_argument("SubsystemSpec: dwell time must be >= 1");
  if (state_box.dim() != n) throw std::invalid_argument("SubsystemSpec: state box dimension");
  if (input_box.dim() != p_bar) throw std::invalid_argument("SubsystemSpec: input box dimension");
  if (C.cols() != n) throw std::invalid_argument("SubsystemSpec: output matrix columns");
  for (size_t p = 0; p < modes.size(); ++p) {
    const auto& m = modes[p];
    const std::string where = "SubsystemSpec mode " + std::to_string(p) + ": ";
    if (m.A.rows() != n || m.A.cols() != n) throw std::invalid_argument(where + "A must be n x n");
    if (m.B.size() != n) throw std::invalid_argument(where + "B must have length n");
    if (m.D.rows() != n || m.D.cols() != p_bar) throw std::invalid_argument(where + "D must be n x p_bar");
    if (m.E.rows() != n || m.F.cols() != n || m.E.cols() != m.F.rows())
      throw std::invalid_argument(where + "E/F dimensions inconsistent");
    if (m.R.rows() != n || m.R.cols() != n) throw std::invalid_argument(where + "R must be n x n");
    if (m.channels() > 0 && m.phi.kind == PhiKind::None)
      throw std::invalid_argument(where + "nonlinearity channels declared but phi is none");
  }
}

Vector SubsystemSpec::effective_sigma(int mode) const {
  const auto& m = modes.at(mode);
  Vector base = noise.base_sigma(n);
  if (noise.kind == NoiseKind::None) return Vector::Zero(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && m.R(i, j) != 0.0)
        throw std::invalid_argument(
            "SubsystemSpec: R must be diagonal for the Gaussian kernel to factor over dimensions");
  Vector sig(n);
  for (int d = 0; d < n; ++d) sig[d] = std::abs(m.R(d, d)) * base[d];
  return sig;
}

Vector concrete_step(const SubsystemSpec& spec, const Vector& x, int mode,
                     const Vector& w, const Vector& noise) {
  if (mode < 0 || mode >= spec.mode_count())
    throw std::invalid_argument("concrete_step: invalid mode index");
  const auto& m = spec.modes[mode];
  if (x.size() != spec.n || w.size() != spec.p_bar || noise.size() != spec.n)
    throw std::invalid_argument("concrete_step: dimension mismatch");
  Vector next = m.A * x + m.B + m.D * w + m.R * noise;
  if (m.channels() > 0) {
    Vector z = m.F * x;
    for (int k = 0; k < z.size(); ++k) z[k] = m.phi(z[k]);
    next += m.E * z;
  }
  return next;
}

ModeCounter dwell_step(const ModeCounter& s, int requested_mode, int dwell_time) {
  if (dwell_time < 1) throw std::invalid_argument("dwell_step: dwell time must be >= 1");
  if (s.counter < 0 || s.counter > dwell_time - 1)
    throw std::invalid_argument("dwell_step: counter out of range");
  if (s.counter < dwell_time - 1) {
    if (requested_mode != s.mode)
      throw DwellViolationError("dwell_step: switch requested before dwell time elapsed (counter " +
                                std::to_string(s.counter) + " of " + std::to_string(dwell_time) + ")");
    return {s.mode, s.counter + 1};
  }
  if (requested_mode == s.mode) return {s.mode, dwell_time - 1};
  return {requested_mode, 0};
}

bool switch_allowed(const ModeCounter& s, int dwell_time) {
  return s.counter >= dwell_time - 1;
}

std::vector<int> admissible_modes(const ModeCounter& s, int dwell_time, int mode_count) {
  if (!switch_allowed(s, dwell_time)) return {s.mode};
  std::vector<int> out(mode_count);
  for (int p = 0; p < mode_count; ++p) out[p] = p;
  return out;
}

std::vector<const Connection*> NetworkSpec::inputs_of(int dst) const {
  std::vector<const Connection*> in;
  for (const auto& c : connections)
    if (c.dst == dst) in.push_back(&c);
  std::sort(in.begin(), in.end(),
            [](const Connection* a, const Connection* b) { return a->src < b->src; });
  return in;
}

void NetworkSpec::validate() const {
  const int N = size();
  for (int i = 0; i < N; ++i) subsystems[i].validate();
  for (const auto& c : connections) {
    if (c.src < 0 || c.src >= N || c.dst < 0 || c.dst >= N || c.src == c.dst)
      throw std::invalid_argument("NetworkSpec: connection endpoints out of range");
    if (c.select.cols() != subsystems[c.src].n)
      throw std::invalid_argument("NetworkSpec: selection matrix column count");
  }
  for (int j = 0; j < N; ++j) {
    auto in = inputs_of(j);
    Eigen::Index rows = 0;
    for (auto* c : in) rows += c->select.rows();
    if (rows != subsystems[j].p_bar)
      throw std::invalid_argument("NetworkSpec: internal input blocks of subsystem " +
                                  std::to_string(j) + " do not fill its input dimension");
    /* interval-arithmetic range check: select * X_src must fit the block */
    Eigen::Index off = 0;
    for (auto* c : in) {
      const Box& xb = subsystems[c->src].state_box;
      for (Eigen::Index r = 0; r < c->select.rows(); ++r) {
        double lo = 0, hi = 0;
        for (Eigen::Index k = 0; k < c->select.cols(); ++k) {
          const double s = c->select(r, k);
          lo += std::min(s * xb.lb[k], s * xb.ub[k]);
          hi += std::max(s * xb.lb[k], s * xb.ub[k]);
        }
        const Box& wb = subsystems[j].input_box;
        if (lo < wb.lb[off + r] - 1e-12 || hi > wb.ub[off + r] + 1e-12)
          throw std::invalid_argument("NetworkSpec: output range of subsystem " +
                                      std::to_string(c->src) + " exceeds input box of subsystem " +
                                      std::to_string(j));
      }
      off += c->select.rows();
    }
  }
}

InterconnectResult interconnect(const NetworkSpec& net, const std::vector<Vector>& states) {
  const int N = net.size();
  if (static_cast<int>(states.size()) != N)
    throw std::invalid_argument("interconnect: state count mismatch");
  InterconnectResult res;
  res.w.resize(N);
  for (int j = 0; j < N; ++j) {
    if (states[j].size() != net.subsystems[j].n)
      throw std::invalid_argument("interconnect: state dimension mismatch");
    Vector wj = Vector::Zero(net.subsystems[j].p_bar);
    Eigen::Index off = 0;
    for (auto* c : net.inputs_of(j)) {
      wj.segment(off, c->select.rows()) = c->select * states[c->src];
      off += c->select.rows();
    }
    const Box& wb = net.subsystems[j].input_box;
    if (wj.size() > 0 && !wb.contains(wj)) {
      res.clamped = true;
      wj = wb.clamp(wj);
    }
    res.w[j] = std::move(wj);
  }
  return res;
}

}  // namespace smdp
