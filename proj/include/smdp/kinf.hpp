/*
 * kinf.hpp
 *
 * Power-law class-K-infinity functions s -> c*s^q.
 * The family is closed under composition and inversion, which is what the
 * gain bookkeeping in the composition layer relies on.
 */

#ifndef SMDP_KINF_HPP_
#define SMDP_KINF_HPP_

#include <cmath>
#include <stdexcept>

namespace smdp {

struct Kinf {
  double c = 1.0;  /* coefficient, >= 0 (0 encodes the zero function) */
  double q = 1.0;  /* exponent, > 0 */

  Kinf() = default;
  Kinf(double coeff, double expo) : c(coeff), q(expo) {
    if (!(c >= 0.0) || !(q > 0.0))
      throw std::invalid_argument("Kinf: need c >= 0 and q > 0");
  }

  static Kinf linear(double slope) { return Kinf(slope, 1.0); }
  static Kinf zero() { return Kinf(0.0, 1.0); }
  static Kinf identity() { return Kinf(1.0, 1.0); }

  bool is_zero() const { return c == 0.0; }
  bool is_linear(double tol = 1e-12) const { return std::abs(q - 1.0) <= tol; }

  double operator()(double s) const {
    if (s < 0.0) throw std::invalid_argument("Kinf: negative argument");
    if (c == 0.0) return 0.0;
    return c * std::pow(s, q);
  }

  /* (c1,q1) o (c2,q2) = (c1*c2^q1, q1*q2) */
  Kinf compose(const Kinf& inner) const {
    return Kinf(c * std::pow(inner.c, q), q * inner.q);
  }

  Kinf inverse() const {
    if (c == 0.0) throw std::domain_error("Kinf: zero function has no inverse");
    return Kinf(std::pow(c, -1.0 / q), 1.0 / q);
  }

  Kinf scaled(double factor) const { return Kinf(c * factor, q); }
};

}  // namespace smdp

#endif
