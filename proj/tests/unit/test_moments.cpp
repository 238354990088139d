#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "fbl/drift.hpp"
#include "fbl/moments.hpp"
#include "fbl/regularize.hpp"

using namespace fbl;

namespace {

const double kSigma = std::sqrt(2.0);

// f = A exp(-|x|^2 / (2 w^2)), so f^2 is a Gaussian of variance s0 = w^2/2 per axis
struct Gauss {
  double A = 1.0, w = 0.7;
  double s0() const { return w * w / 2; }
  ScalarField f(const BoxGrid& g) const {
    ScalarField out(g);
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = A * std::exp(-g.radius_sq(i) / (2 * w * w));
    return out;
  }
  // heat flow of f^2 with diffusivity sigma^2/2 for time t
  double v(double r2, double t, int d) const {
    const double s = s0() + kSigma * kSigma * t;
    return A * A * std::pow(s0() / s, d / 2.0) * std::exp(-r2 / (2 * s));
  }
  // heat flow of d_i f d_j f = f^2 x_i x_j / w^4
  double V(const BoxGrid& g, std::size_t idx, int i, int j, double t) const {
    const double tau = kSigma * kSigma * t, s = s0() + tau;
    const double xi = g.coord(g.index_along(idx, i)), xj = g.coord(g.index_along(idx, j));
    const double poly = std::pow(s0() / s, 2) * xi * xj + (i == j ? s0() * tau / s : 0.0);
    return v(g.radius_sq(idx), t, g.dim()) * poly / std::pow(w, 4);
  }
};

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

SolverConfig config(double T, double mu = 0.0) {
  SolverConfig c;
  c.sigma = kSigma;
  c.mu = mu;
  c.T = T;
  return c;
}

// mollified Hardy member with its certificate, on a 32^3 grid
struct Hardy {
  BoxGrid grid{3, 4.0, 32};
  MollifiedDrift md;
  Hardy(double beta, double gamma) {
    auto seq = build_mollified_sequence(make_hardy_drift(3, beta, 1), hardy_certificate(3, beta).delta,
                                        std::vector<double>{gamma * 4, gamma}, grid);
    md = seq.back();
  }
};

}  // namespace

TEST_CASE("b = 0: second moment follows the heat kernel") {
  BoxGrid g(3, 4.0, 64);
  Gauss G;
  for (double mu : {0.0, 0.7}) {
    auto s = solve_second_moment(DriftField::zero(3), G.f(g), config(0.1, mu));
    std::vector<double> exact(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) exact[i] = G.v(g.radius_sq(i), 0.1, 3) * std::exp(-2 * mu * 0.1);
    CHECK(rel_l2(s.final().data, exact) <= 0.01);
    CHECK(s.snapshots.front().data[0] == G.f(g)[0] * G.f(g)[0]);
  }
}

TEST_CASE("b = 0: gradient moments follow the heat kernel with decay") {
  BoxGrid g(3, 4.0, 64);
  Gauss G;
  const double mu = 0.4, T = 0.1;
  auto s = solve_gradient_moment_system_q1(DriftField::zero(3), G.f(g), config(T, mu));
  const auto& V = s.final();
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      std::vector<double> exact(g.size());
      for (std::size_t idx = 0; idx < g.size(); ++idx) exact[idx] = G.V(g, idx, i, j, T) * std::exp(-2 * mu * T);
      CHECK(rel_l2(V.comp[MatrixField::packed_index(3, i, j)], exact) <= 0.01);
    }
}

TEST_CASE("b = 0: dual moment follows the heat kernel") {
  BoxGrid g(3, 4.0, 64);
  Gauss G;
  // v0 = f, so w(0) = f^2 and the heat oracle is the same as for v
  auto s = solve_dual_continuity_moment(DriftField::zero(3), G.f(g), config(0.1, 0.3));
  std::vector<double> exact(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) exact[i] = G.v(g.radius_sq(i), 0.1, 3) * std::exp(-0.06);
  CHECK(rel_l2(s.final().data, exact) <= 0.01);
}

TEST_CASE("constant mode decays exactly") {
  BoxGrid g(3, 2.0, 16);
  ScalarField f(g, 1.5);
  auto s = solve_second_moment(DriftField::zero(3), f, config(0.5, 0.8));
  for (double x : s.final().data) CHECK(x == doctest::Approx(2.25 * std::exp(-2 * 0.8 * 0.5)).epsilon(1e-13));
}

TEST_CASE("linear drift with constant V0 matches the matrix exponential") {
  BoxGrid g(3, 2.0, 16);
  const std::vector<double> a{0.3, -0.5, 0.0, 0.2, 0.1, 0.4, -0.1, 0.0, -0.2};
  auto b = DriftField::linear(3, a);
  MatrixField V0(g);
  const double init[3][3] = {{2.0, 0.3, -0.4}, {0.3, 1.0, 0.1}, {-0.4, 0.1, 0.5}};
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) std::fill(V0.comp[V0.packed_index(i, j)].begin(), V0.comp[V0.packed_index(i, j)].end(), init[i][j]);
  const double mu = 0.1, T = 0.5;
  auto cfg = config(T, mu);
  cfg.dt = 1e-3;
  auto s = solve_gradient_moment_system_q1(b, V0, cfg);

  Eigen::Matrix3d A, M0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      A(i, j) = a[i * 3 + j];
      M0(i, j) = init[i][j];
    }
  // dV/dt = -2 mu V - A^T V - V A
  const Eigen::Matrix3d E = (-A * T).exp();
  const Eigen::Matrix3d exact = std::exp(-2 * mu * T) * E.transpose() * M0 * E;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j)
      for (std::size_t idx : {std::size_t{0}, g.size() / 2, g.size() - 1})
        CHECK(s.final().at(i, j, idx) == doctest::Approx(exact(i, j)).epsilon(5e-3));
}

TEST_CASE("zero initial data stays zero") {
  BoxGrid g(3, 2.0, 16);
  auto b = make_hardy_drift(3, 0.3, 1);
  ScalarField flat(g, 3.0), zero(g, 0.0);
  auto V = solve_gradient_moment_system_q1(b, flat, config(0.1));
  for (const auto& c : V.final().comp)
    for (double x : c) CHECK(x == 0.0);
  auto w = solve_dual_continuity_moment(b, zero, config(0.1));
  for (double x : w.final().data) CHECK(x == 0.0);
}

TEST_CASE("rotation drift: dual solution equals advection with -b") {
  BoxGrid g(3, 4.0, 48);
  Gauss G;
  G.w = 0.5;
  ScalarField v0(g);
  // off-centre bump so the rotation moves it
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.coord(g.index_along(i, 0)) - 0.8, y = g.coord(g.index_along(i, 1));
    const double z = g.coord(g.index_along(i, 2));
    v0[i] = std::exp(-(x * x + y * y + z * z) / (2 * G.w * G.w));
  }
  auto b = DriftField::linear(3, {0, -1.5, 0, 1.5, 0, 0, 0, 0, 0});
  auto cfg = config(0.2, 0.1);
  auto dual = solve_dual_continuity_moment(b, v0, cfg);
  auto adv = solve_second_moment(b.scaled(-1.0), v0, cfg);
  CHECK(rel_l2(dual.final().data, adv.final().data) <= 0.01);
}

TEST_CASE("positivity before clipping") {
  Hardy h(0.3, 0.01);
  Gauss G;
  auto f = G.f(h.grid);
  auto cfg = config(0.1);
  auto v = solve_second_moment(h.md.field, f, cfg);
  CHECK(v.stats.min_relative >= -1e-12);
  auto w = solve_dual_continuity_moment(h.md.field, f, cfg);
  CHECK(w.stats.min_relative >= -1e-12);
  auto raw = solve_second_moment(make_hardy_drift(3, 0.8, -1), f, cfg);
  CHECK(raw.stats.min_relative >= -1e-12);
  CHECK(raw.stats.max_drift <= 1.0 / h.grid.spacing() * (1 + 1e-12));
}

TEST_CASE("E1 check with b = 0 passes as a contraction") {
  BoxGrid g(3, 4.0, 32);
  Gauss G;
  auto th = thresholds(3, 1, 2.0, 0.0, 0.0, kSigma);
  auto s = solve_second_moment(DriftField::zero(3), G.f(g), config(0.2));
  auto r = check_E1(s, G.f(g), 2.0, th, 0.0);
  CHECK(r.pass);
  CHECK(r.lhs <= r.bound * (1 + 1e-12));
  CHECK(r.constant == 1.0);
  CHECK(r.tag == "E1");
}

TEST_CASE("checks on a mollified Hardy drift: pass, homogeneity, refusal") {
  Hardy h(0.1, 0.01);  // delta = 0.04
  Gauss G;
  const auto f = G.f(h.grid);
  auto th = thresholds(3, 1, 2.0, h.md.delta_m, h.md.certificate().c_delta, kSigma);
  SUBCASE("E1 at mu_E1 and its homogeneity") {
    auto s1 = solve_second_moment(h.md.field, f, config(0.2, th.mu_E1));
    auto r1 = check_E1(s1, f, 2.0, th, th.mu_E1);
    Gauss G2 = G;
    G2.A = 2.0;
    const auto f2 = G2.f(h.grid);
    auto s2 = solve_second_moment(h.md.field, f2, config(0.2, th.mu_E1));
    auto r2 = check_E1(s2, f2, 2.0, th, th.mu_E1);
    CHECK(r1.pass);
    CHECK(r2.pass == r1.pass);
    CHECK(r2.lhs / r1.lhs == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(r2.bound / r1.bound == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("E1 refuses below mu_E1 and outside p > p_c") {
    auto s = solve_second_moment(h.md.field, f, config(0.05));
    CHECK_THROWS_AS(check_E1(s, f, 2.0, th, 0.5 * th.mu_E1), GateError);
    auto low = thresholds(3, 1, 1.05, h.md.delta_m, h.md.certificate().c_delta, kSigma);
    CHECK_THROWS_AS(check_E1(s, f, 1.05, low, 10.0), GateError);
  }
  SUBCASE("dual at mu_dual") {
    WeightParams wp;
    auto w = solve_dual_continuity_moment(h.md.field, f, config(0.2, th.mu_dual));
    auto r = check_dual_weighted_bound(w, f, wp, th, th.mu_dual);
    CHECK(r.pass);
    CHECK_THROWS_AS(check_dual_weighted_bound(w, f, wp, th, 0.9 * th.mu_dual), GateError);
  }
  SUBCASE("gradient bound is refused at delta = 0.04") {
    auto V = solve_gradient_moment_system_q1(h.md.field, f, config(0.02, th.c_hat));
    CHECK_THROWS_AS(check_gradient_bound(V, th, th.c_hat), GateError);
  }
}

TEST_CASE("gradient bound at small delta: pass and degree-4 homogeneity") {
  Hardy h(0.022360679774997897, 0.0009);  // delta = 0.002
  Gauss G;
  auto th = thresholds(3, 1, 2.0, h.md.delta_m, h.md.certificate().c_delta, kSigma);
  REQUIRE(th.gradient_ok);
  auto V1 = solve_gradient_moment_system_q1(h.md.field, G.f(h.grid), config(0.1, th.c_hat));
  auto r1 = check_gradient_bound(V1, th, th.c_hat);
  Gauss G2 = G;
  G2.A = 2.0;
  auto V2 = solve_gradient_moment_system_q1(h.md.field, G2.f(h.grid), config(0.1, th.c_hat));
  auto r2 = check_gradient_bound(V2, th, th.c_hat);
  CHECK(r1.pass);
  CHECK(r2.pass);
  CHECK(r2.lhs / r1.lhs == doctest::Approx(16.0).epsilon(1e-10));
  CHECK(r2.bound / r1.bound == doctest::Approx(16.0).epsilon(1e-10));
  CHECK(std::abs(r2.lhs / r2.bound - r1.lhs / r1.bound) <= 1e-10);
  CHECK(r1.details.contains("kappa_star"));
}

TEST_CASE("rotation drift: dual solution converges to the rotating Gaussian") {
  // characteristics dx/dt = -b rotate the centre (c, 0, 0) by angle -omega t
  const double omega = 0.5, T = 0.2, c = 0.8, w2 = 0.25;
  double prev = INFINITY;
  for (int n : {32, 64}) {
    BoxGrid g(3, 4.0, n);
    ScalarField v0(g);
    std::vector<double> exact(g.size());
    const double s0 = w2 / 2, s = s0 + kSigma * kSigma * T;
    const double cx = c * std::cos(omega * T), cy = -c * std::sin(omega * T);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = g.coord(g.index_along(i, 0)), y = g.coord(g.index_along(i, 1));
      const double z = g.coord(g.index_along(i, 2));
      v0[i] = std::exp(-((x - c) * (x - c) + y * y + z * z) / (2 * w2));
      exact[i] = std::pow(s0 / s, 1.5) * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy) + z * z) / (2 * s));
    }
    auto b = DriftField::linear(3, {0, -omega, 0, omega, 0, 0, 0, 0, 0});
    const double err = rel_l2(solve_dual_continuity_moment(b, v0, config(T)).final().data, exact);
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev <= 0.01);
}
