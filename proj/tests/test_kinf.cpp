#include <doctest.h>

#include <random>

#include "smdp/kinf.hpp"

using smdp::Kinf;

TEST_CASE("power-law composition and inverse") {
  const Kinf rho(0.72, 2.0), alpha(1.0, 2.0);
  const Kinf comp = rho.compose(alpha.inverse());
  CHECK(comp.q == doctest::Approx(1.0));
  CHECK(comp.c == doctest::Approx(0.72));

  /* quadratic gain against a scaled quadratic bound */
  const Kinf rho2(0.19, 2.0), alpha2(0.2, 2.0);
  CHECK(rho2.compose(alpha2.inverse()).c == doctest::Approx(0.95));
  CHECK(rho2.compose(alpha2.inverse()).q == doctest::Approx(1.0));
}

TEST_CASE("inverse round-trips pointwise") {
  const Kinf f(3.7, 1.8);
  for (double s : {0.1, 1.0, 7.5, 123.0})
    CHECK(f.inverse()(f(s)) == doctest::Approx(s).epsilon(1e-12));
}

TEST_CASE("compose-then-invert equals invert-then-compose-reversed") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> coeff(0.1, 5.0), expo(0.25, 3.0), arg(0.01, 50.0);
  for (int i = 0; i < 200; ++i) {
    const Kinf f(coeff(gen), expo(gen)), g(coeff(gen), expo(gen));
    const Kinf lhs = f.compose(g).inverse();
    const Kinf rhs = g.inverse().compose(f.inverse());
    const double s = arg(gen);
    CHECK(lhs(s) == doctest::Approx(rhs(s)).epsilon(1e-12));
  }
}

TEST_CASE("zero function") {
  const Kinf z = Kinf::zero();
  CHECK(z.is_zero());
  CHECK(z(4.2) == 0.0);
  CHECK_THROWS_AS(z.inverse(), std::domain_error);
  CHECK(Kinf(2.0, 2.0).compose(z).is_zero());
}

TEST_CASE("invalid parameters rejected") {
  CHECK_THROWS_AS(Kinf(-1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(Kinf(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(Kinf(1.0, 1.0)(-0.5), std::invalid_argument);
}
