/*
 * model.hpp
 *
 * Concrete switched subsystems, their interconnection, and the dwell-time
 * automaton that turns a switched system into a Markov decision process
 * with augmented state (x, mode, counter).
 */

#ifndef SMDP_MODEL_HPP_
#define SMDP_MODEL_HPP_

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace smdp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/* axis-aligned box [lb, ub] */
struct Box {
  Vector lb, ub;

  Box() = default;
  Box(Vector lo, Vector hi);
  static Box interval(double lo, double hi);  /* 1-d convenience */
  static Box cube(int dim, double lo, double hi);

  int dim() const { return static_cast<int>(lb.size()); }
  bool contains(const Vector& x, double tol = 0.0) const;
  Vector clamp(const Vector& x) const;
  Vector width() const { return ub - lb; }
};

enum class NoiseKind { StandardNormal, ScaledNormal, None };

struct NoiseModel {
  NoiseKind kind = NoiseKind::StandardNormal;
  Vector sigma;  /* per-dimension std deviation, used when kind == ScaledNormal */

  static NoiseModel standard_normal(int dim);
  static NoiseModel scaled_normal(Vector sigma);
  static NoiseModel none(int dim);

  /* std deviation of each noise coordinate (zeros when kind == None) */
  Vector base_sigma(int dim) const;
};

enum class PhiKind { None, Sine, Custom };

/* scalar nonlinearity with a declared slope bound: 0 <= dphi <= slope_bound */
struct Nonlinearity {
  PhiKind kind = PhiKind::None;
  double slope_bound = 0.0;  /* may be +infinity */
  std::function<double(double)> fn;

  static Nonlinearity none();
  static Nonlinearity sine();  /* declared slope bound 1 */
  static Nonlinearity custom(std::function<double(double)> f, double slope_bound);

  double operator()(double s) const;
};

/* report of the numeric spot-check of the declared slope restriction */
struct SlopeCheckReport {
  int samples = 0;
  int two_sided_violations = 0;  /* |slope| > bound */
  int one_sided_violations = 0;  /* slope < 0 (declared class requires slope >= 0) */
  double worst_slope = 0.0;
  bool two_sided_ok() const { return two_sided_violations == 0; }
};

SlopeCheckReport check_slope_restriction(const Nonlinearity& phi, int samples = 2000,
                                         double range = 10.0, uint64_t seed = 1);

/*
 * One switching mode:  x+ = A x + E phi(F x) + B + D w + R noise.
 * E is n x r and F is r x n; phi acts componentwise on the r channels.
 */
struct ModeDynamics {
  Matrix A;
  Vector B;
  Matrix D;
  Matrix E;
  Matrix F;
  Matrix R;
  Nonlinearity phi;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(D.cols()); }
  int channels() const { return static_cast<int>(F.rows()); }

  /* linear mode convenience: no nonlinearity, E/F empty */
  static ModeDynamics linear(Matrix A, Vector B, Matrix D, Matrix R);
};

struct SubsystemSpec {
  int n = 0;      /* state dimension */
  int p_bar = 0;  /* internal input dimension */
  std::vector<ModeDynamics> modes;
  Matrix C;       /* output map y = C x */
  Box state_box;
  Box input_box;
  int dwell_time = 1;
  NoiseModel noise;

  int mode_count() const { return static_cast<int>(modes.size()); }
  int output_dim() const { return static_cast<int>(C.rows()); }

  /* throws std::invalid_argument on dimension inconsistencies */
  void validate() const;

  /*
   * Per-dimension std deviation of the additive term R*noise for one mode.
   * The Gaussian abstraction factorizes over dimensions, so R must be
   * diagonal whenever the noise is not None.
   */
  Vector effective_sigma(int mode) const;
};

/* successor state A_p x + E_p phi_p(F_p x) + B_p + D_p w + R_p noise */
Vector concrete_step(const SubsystemSpec& spec, const Vector& x, int mode,
                     const Vector& w, const Vector& noise);

/* ---- dwell-time automaton ------------------------------------------- */

struct ModeCounter {
  int mode = 0;
  int counter = 0;
};

struct GlobalState {
  Vector x;
  int mode = 0;
  int counter = 0;
};

class DwellViolationError : public std::logic_error {
 public:
  explicit DwellViolationError(const std::string& what) : std::logic_error(what) {}
};

/*
 * Advance the (mode, counter) pair for one step given the requested mode.
 * The returned mode is the one applied during the step:
 *   counter < k_d-1 : only the current mode may be requested, counter + 1
 *   counter = k_d-1, request = current : stay, counter saturates at k_d-1
 *   counter = k_d-1, request != current: switch, counter resets to 0
 * A disallowed request throws DwellViolationError.
 */
ModeCounter dwell_step(const ModeCounter& s, int requested_mode, int dwell_time);

bool switch_allowed(const ModeCounter& s, int dwell_time);

/* modes requestable at (mode, counter); always contains the current mode */
std::vector<int> admissible_modes(const ModeCounter& s, int dwell_time, int mode_count);

/* ---- interconnection -------------------------------------------------- */

/* routes y = select * x_src into the internal input block of dst */
struct Connection {
  int src = 0;
  int dst = 0;
  Matrix select;
};

struct NetworkSpec {
  std::vector<SubsystemSpec> subsystems;
  std::vector<Connection> connections;

  int size() const { return static_cast<int>(subsystems.size()); }

  /* incoming connections of dst ordered by source index (block layout) */
  std::vector<const Connection*> inputs_of(int dst) const;

  /*
   * Validates dimensions, that the stacked blocks fill each internal input
   * exactly, and that the image of each state box is contained in the
   * destination's internal input box (interval arithmetic).
   */
  void validate() const;
};

struct InterconnectResult {
  std::vector<Vector> w;
  bool clamped = false;  /* some routed value fell outside the input box */
};

/* assemble internal inputs from subsystem states; absent blocks are zero */
InterconnectResult interconnect(const NetworkSpec& net, const std::vector<Vector>& states);

}  // namespace smdp

#endif
