#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "smdp/composition.hpp"
#include "smdp/config.hpp"

using namespace smdp;

namespace {

SpsfCertificate ring_certificate() {
  SpsfCertificate cert;
  cert.modes = {ModeCertificate{Matrix::Identity(1, 1), 0.4107, 0.85},
                ModeCertificate{Matrix::Identity(1, 1), 0.4107, 0.85}};
  cert.mu = 1.0;
  cert.epsilon = 2.0;
  cert.dwell_time = 1;
  cert.kappa_bar_base = 0.4107;
  cert.rho_bar_int = Kinf(0.5447, 2.0);
  cert.gamma_bar_coeff = 4.53;
  cert.kappa = 0.99;
  cert.rho_int = Kinf(0.72, 2.0);
  cert.psi_coeff = 84.96;
  cert.alpha = Kinf(1.0, 2.0);
  cert.provenance = "paper";
  return cert;
}

NetworkSpec ring(int cells) {
  return make_traffic_ring(cells, 0.36, 0.25, {0.0, 8.0}, 0.83, 0.0, 20.0, 1);
}

GainGraph graph_from(const std::vector<double>& diag,
                     const std::vector<std::vector<double>>& gains) {
  GainGraph g;
  g.n = static_cast<int>(diag.size());
  g.diag = diag;
  g.gain.assign(g.n, std::vector<Kinf>(g.n, Kinf::zero()));
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j)
      if (i != j && gains[i][j] > 0.0) g.gain[i][j] = Kinf::linear(gains[i][j]);
  return g;
}

}  // namespace

TEST_CASE("channel gains compose exactly in the power-law family") {
  const auto net = ring(3);
  std::vector<SpsfCertificate> certs(3, ring_certificate());
  auto g = assemble_gains(certs, net, Kinf::linear(1.1), Kinf::linear(0.05));
  /* (1 + 0.05) applied to 0.72 s^2 through 1.1 s and the inverse of s^2:
     exact composition squares the inner linear slope */
  const double expected = 1.05 * 0.72 * 1.1 * 1.1;
  CHECK(expected == doctest::Approx(0.91476));
  for (int i = 0; i < 3; ++i) {
    CHECK(g.diag[i] == doctest::Approx(0.99));
    const int j = (i + 2) % 3;  /* upstream neighbor */
    CHECK(g.present(i, j));
    CHECK(g.gain[i][j].q == doctest::Approx(1.0));
    CHECK(g.slope(i, j) == doctest::Approx(expected).epsilon(1e-12));
    CHECK_FALSE(g.present(i, (i + 1) % 3));
  }
}

TEST_CASE("disconnected pairs carry no gain") {
  NetworkSpec net;
  auto cell = ring(2).subsystems[0];
  cell.p_bar = 0;
  cell.input_box = Box();
  for (auto& m : cell.modes) m.D = Matrix::Zero(1, 0);
  net.subsystems = {cell, cell};
  std::vector<SpsfCertificate> certs(2, ring_certificate());
  auto g = assemble_gains(certs, net);
  CHECK_FALSE(g.present(0, 1));
  CHECK_FALSE(g.present(1, 0));
  auto sg = check_small_gain(g);
  CHECK(sg.feasible);
}

TEST_CASE("quadratic gain against quadratic bound is linear") {
  const Kinf rho(0.19, 2.0), alpha(0.2, 2.0);
  CHECK(rho.compose(alpha.inverse()).c == doctest::Approx(0.95));
}

TEST_CASE("two-node feasibility by hand") {
  auto g = graph_from({0.99, 0.99}, {{0.0, 0.5}, {0.5, 0.0}});
  auto sg = check_small_gain(g);
  CHECK(sg.feasible);  /* two-cycle product 0.25 */
  CHECK(sg.max_scaled_gain < 1.0);

  auto bad = graph_from({0.99, 0.99}, {{0.0, 1.2}, {1.2, 0.0}});
  auto sgb = check_small_gain(bad);
  CHECK_FALSE(sgb.feasible);
  CHECK(sgb.witness_product == doctest::Approx(1.44));
  CHECK(sgb.witness_cycle.size() == 2);
}

TEST_CASE("symmetric ring accepts identity scalings") {
  const auto net = ring(5);
  std::vector<SpsfCertificate> certs(5, ring_certificate());
  auto sg = check_small_gain(assemble_gains(certs, net));
  REQUIRE(sg.feasible);
  for (double s : sg.sigma) CHECK(s == doctest::Approx(1.0));
}

TEST_CASE("karp feasibility matches exhaustive cycle enumeration") {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(gen() % 7);
    std::vector<double> diag(n);
    std::vector<std::vector<double>> gains(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) diag[i] = 0.05 + 0.9 * u(gen);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && u(gen) < 0.4) gains[i][j] = 0.1 + 1.3 * u(gen);
    auto verdict = oracle::enumerate_cycles(diag, gains);
    auto sg = check_small_gain(graph_from(diag, gains));
    CHECK(sg.feasible == verdict.feasible);
    if (!sg.feasible) {
      CHECK(sg.witness_product >= 1.0 - 1e-9);
      /* the witness is a real cycle: re-evaluate its product */
      double prod = 1.0;
      for (std::size_t s = 0; s < sg.witness_cycle.size(); ++s) {
        const int a = sg.witness_cycle[s];
        const int b = sg.witness_cycle[(s + 1) % sg.witness_cycle.size()];
        prod *= (a == b) ? diag[a] : gains[b][a];
      }
      if (sg.witness_cycle.size() == 1) prod = diag[sg.witness_cycle[0]];
      CHECK(prod == doctest::Approx(sg.witness_product));
    } else {
      CHECK(sg.max_scaled_gain < 1.0);
    }
  }
}

TEST_CASE("composed constants for the matched ring") {
  for (int n : {3, 10, 200}) {
    const auto net = ring(n);
    std::vector<SpsfCertificate> certs(n, ring_certificate());
    auto g = assemble_gains(certs, net);
    auto sg = check_small_gain(g);
    REQUIRE(sg.feasible);
    const double db = 0.02;
    std::vector<double> psis(n, certs[0].psi(db));
    auto ssf = compose_ssf(certs, g, sg, true, Matrix::Zero(n, n), psis);
    CHECK(ssf.kappa == doctest::Approx(0.99));
    CHECK(ssf.psi == doctest::Approx(84.96 * db * db));
    CHECK(ssf.alpha.c == doctest::Approx(1.0));
    CHECK(ssf.alpha.q == doctest::Approx(2.0));
  }
}

TEST_CASE("single subsystem composes to itself") {
  NetworkSpec net;
  auto cell = ring(2).subsystems[0];
  cell.p_bar = 0;
  cell.input_box = Box();
  for (auto& m : cell.modes) m.D = Matrix::Zero(1, 0);
  net.subsystems = {cell};
  auto cert = ring_certificate();
  cert.rho_int = Kinf::zero();
  cert.rho_bar_int = Kinf::zero();
  std::vector<SpsfCertificate> certs{cert};
  auto g = assemble_gains(certs, net);
  auto sg = check_small_gain(g);
  REQUIRE(sg.feasible);
  auto ssf = compose_ssf(certs, g, sg, false, Matrix::Zero(1, 1), {0.034});
  CHECK(ssf.kappa == doctest::Approx(cert.kappa));
  CHECK(ssf.psi == doctest::Approx(0.034));
  CHECK(ssf.alpha.c == doctest::Approx(cert.alpha.c));
}

TEST_CASE("heterogeneous offsets compose with the max rule") {
  const auto net = ring(2);
  std::vector<SpsfCertificate> certs(2, ring_certificate());
  auto g = assemble_gains(certs, net);
  auto sg = check_small_gain(g);
  REQUIRE(sg.feasible);
  auto ssf = compose_ssf(certs, g, sg, true, Matrix::Zero(2, 2), {1e-3, 4e-3});
  CHECK(ssf.psi == doctest::Approx(4e-3));
}

TEST_CASE("offset is monotone in the input quantization and the local offsets") {
  const auto net = ring(3);
  std::vector<SpsfCertificate> certs(3, ring_certificate());
  auto g = assemble_gains(certs, net);
  auto sg = check_small_gain(g);
  REQUIRE(sg.feasible);
  double last = -1.0;
  for (double mu : {0.0, 0.01, 0.05, 0.1}) {
    Matrix mu_bar = Matrix::Constant(3, 3, mu);
    auto ssf = compose_ssf(certs, g, sg, false, mu_bar, {0.03, 0.03, 0.03});
    CHECK(ssf.psi >= last);
    last = ssf.psi;
  }
  auto lo = compose_ssf(certs, g, sg, true, Matrix::Zero(3, 3), {0.03, 0.03, 0.03});
  auto hi = compose_ssf(certs, g, sg, true, Matrix::Zero(3, 3), {0.05, 0.03, 0.03});
  CHECK(hi.psi >= lo.psi);
}

TEST_CASE("scaling invariance of the composed constants") {
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  auto g = graph_from({0.9, 0.8, 0.7}, {{0.0, u(gen), 0.0}, {u(gen), 0.0, u(gen)}, {0.0, u(gen), 0.0}});
  auto sg = check_small_gain(g);
  REQUIRE(sg.feasible);
  for (double c : {0.5, 2.0, 10.0}) {
    auto scaled = sg;
    for (auto& s : scaled.sigma) s *= c;
    double max_gain = 0.0;
    for (int i = 0; i < 3; ++i) {
      max_gain = std::max(max_gain, g.diag[i]);
      for (int j = 0; j < 3; ++j)
        if (i != j && g.present(i, j))
          max_gain = std::max(max_gain, g.slope(i, j) * scaled.sigma[j] / scaled.sigma[i]);
    }
    CHECK(max_gain == doctest::Approx(sg.max_scaled_gain));
  }
}

TEST_CASE("initial simulation-function value") {
  std::vector<SpsfCertificate> certs(2, ring_certificate());
  std::vector<double> sigma{1.0, 1.0};
  std::vector<Vector> a{Vector::Constant(1, 10.0), Vector::Constant(1, 10.0)};
  std::vector<Vector> ah{Vector::Constant(1, 10.01), Vector::Constant(1, 9.99)};
  const double v0 = initial_v0(certs, sigma, a, ah, {0, 0});
  CHECK(v0 == doctest::Approx(0.0001));
}

TEST_CASE("nonlinear gain margins tighten to feasibility") {
  /* with the default margins the quadratic/quadratic channel exceeds one,
     with tight margins it stays below one */
  SpsfCertificate cert;
  cert.modes = {ModeCertificate{Matrix::Identity(2, 2), 0.7, 0.5}};
  cert.mu = 1.0;
  cert.epsilon = 1.75;
  cert.dwell_time = 1;
  cert.kappa_bar_base = 0.7;
  cert.rho_bar_int = Kinf(0.19, 2.0);
  cert.gamma_bar_coeff = 1.0;
  cert.kappa = 0.99;
  cert.rho_int = Kinf(0.19, 2.0);
  cert.psi_coeff = 2266.0;
  cert.alpha = Kinf(0.2, 2.0);

  Matrix A1(2, 2);
  A1 << 0.05, 0.0, 0.9, 0.03;
  Matrix E(2, 1), F(1, 2);
  E << 0.1, 0.1;
  F << 0.1, 0.1;
  auto net = make_nonlinear_full(2, {A1}, {Vector::Zero(2)}, 0.015 * Matrix::Identity(2, 2), E, F,
                                 Nonlinearity::sine(), -8.0, 8.0, 1);
  std::vector<SpsfCertificate> certs(2, cert);
  auto g_loose = assemble_gains(certs, net, Kinf::linear(1.1), Kinf::linear(0.05));
  CHECK_FALSE(check_small_gain(g_loose).feasible);
  auto g_tight = assemble_gains(certs, net, Kinf::linear(1.01), Kinf::linear(0.01));
  CHECK(check_small_gain(g_tight).feasible);
}
