#include <doctest.h>

#include <random>

#include "smdp/grid.hpp"

using namespace smdp;

TEST_CASE("target diameter produces ceiling-division cell counts") {
  const auto g = UniformGrid::with_target_diameter(Box::interval(0.0, 20.0), 0.02);
  CHECK(g.cell_count() == 1000);
  CHECK(g.diameter() == doctest::Approx(0.02));

  const auto g2 = UniformGrid::with_target_diameter(Box::cube(2, 0.0, 1.0), 0.5);
  CHECK(g2.cell_count() == 4);

  const auto g3 = UniformGrid::with_target_diameter(Box::interval(0.0, 20.0), 0.03);
  CHECK(g3.cell_count() == 667);
  CHECK(g3.width(0) <= 0.03);
}

TEST_CASE("degenerate boxes are rejected") {
  Vector lo(1), hi(1);
  lo << 1.0;
  hi << 1.0;
  CHECK_THROWS_AS(Box(lo, hi), std::invalid_argument);
  CHECK_THROWS_AS(UniformGrid::with_target_diameter(Box::interval(0, 1), 0.0),
                  std::invalid_argument);
}

TEST_CASE("quantizer returns cell centers") {
  const auto g = UniformGrid::with_target_diameter(Box::interval(0.0, 20.0), 0.02);
  auto q = g.quantize(Vector::Constant(1, 10.007));
  REQUIRE(q.in_box);
  CHECK(q.rep[0] == doctest::Approx(10.01));
  CHECK(std::abs(q.rep[0] - 10.007) <= g.diameter());

  /* a center is a fixed point */
  auto q2 = g.quantize(q.rep);
  CHECK(q2.cell == q.cell);
  CHECK(q2.rep[0] == doctest::Approx(q.rep[0]));

  /* outside the box: absorbing marker, not an error */
  auto q3 = g.quantize(Vector::Constant(1, 25.0));
  CHECK_FALSE(q3.in_box);
}

TEST_CASE("certified quantization error on random points") {
  std::mt19937_64 gen(5);
  const auto box = Box(Vector(Vector::Zero(3)), (Vector(3) << 4.0, 2.0, 7.0).finished());
  const auto g = UniformGrid::with_target_diameter(box, 0.37);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100000; ++i) {
    Vector x(3);
    for (int d = 0; d < 3; ++d) x[d] = box.lb[d] + u(gen) * (box.ub[d] - box.lb[d]);
    auto q = g.quantize(x);
    REQUIRE(q.in_box);
    const double err = (q.rep - x).lpNorm<Eigen::Infinity>();
    CHECK(err <= g.diameter());
    CHECK(err <= g.diameter() / 2.0 + 1e-12);  /* center rule halves the bound */
  }
}

TEST_CASE("internal input grid certifies the analogous bound") {
  const auto g = UniformGrid::with_target_diameter(Box::cube(4, -8.0, 8.0), 8.0);
  CHECK(g.cell_count() == 16);
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int i = 0; i < 1000; ++i) {
    Vector w(4);
    for (int d = 0; d < 4; ++d) w[d] = u(gen);
    auto q = g.quantize(w);
    REQUIRE(q.in_box);
    CHECK((q.rep - w).lpNorm<Eigen::Infinity>() <= g.diameter());
  }
}

TEST_CASE("quantization is idempotent across the whole grid") {
  const auto g = UniformGrid::with_counts(Box::cube(2, -1.0, 3.0), {7, 5});
  for (std::int64_t c = 0; c < g.cell_count(); ++c) {
    auto q = g.quantize(g.representative(c));
    REQUIRE(q.in_box);
    CHECK(q.cell == c);
  }
}

TEST_CASE("boundary points belong to the upper cell, upper face to the last") {
  const auto g = UniformGrid::with_counts(Box::interval(0.0, 1.0), {4});
  CHECK(*g.locate(Vector::Constant(1, 0.25)) == 1);  /* half-open cells */
  CHECK(*g.locate(Vector::Constant(1, 1.0)) == 3);
  CHECK(*g.locate(Vector::Constant(1, 0.0)) == 0);
}

TEST_CASE("flatten and unflatten are inverse") {
  const auto g = UniformGrid::with_counts(Box::cube(3, 0.0, 1.0), {3, 4, 5});
  for (std::int64_t c = 0; c < g.cell_count(); ++c)
    CHECK(g.flatten(g.unflatten(c)) == c);
}
