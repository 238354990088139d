#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "fbl/drift.hpp"
#include "fbl/gridio.hpp"

using namespace fbl;

namespace {

std::vector<double> eval(const DriftField& b, std::vector<double> x) {
  std::vector<double> out(x.size());
  b.eval(x, out);
  return out;
}

}  // namespace

TEST_CASE("hardy drift: direct formula") {
  auto b = make_hardy_drift(3, 0.5, -1);
  auto v = eval(b, {1, 0, 0});
  CHECK(v[0] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(v[1] == 0.0);
  CHECK(v[2] == 0.0);

  auto c = make_hardy_drift(3, 1.0, 1);
  auto w = eval(c, {0, 2, 0});
  CHECK(w[0] == 0.0);
  CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-15));  // beta |x|^-2 x = (1/4)(0, 2, 0)
  CHECK(w[2] == 0.0);
  CHECK(c.singular_set() == "origin");
  CHECK(c.differentiable());
}

TEST_CASE("hardy drift in d=4 with beta=1 is the sqrt(delta)=1 member") {
  // sqrt(delta) (d-2)/2 |x|^-2 x with sqrt(delta) = 1
  auto b = make_hardy_drift(4, 1.0, 1);
  std::vector<double> x{0.3, -0.2, 0.7, 0.1};
  auto v = eval(b, x);
  double r2 = 0;
  for (double a : x) r2 += a * a;
  for (int a = 0; a < 4; ++a) CHECK(v[a] == doctest::Approx(1.0 * (4 - 2) / 2.0 * x[a] / r2).epsilon(1e-14));
}

TEST_CASE("hardy drift: |b| = beta/|x| at random points") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  auto b = make_hardy_drift(5, 1.7, 1);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> x(5);
    for (double& a : x) a = n(rng);
    const auto v = eval(b, x);
    double r = 0, m = 0;
    for (int a = 0; a < 5; ++a) {
      r += x[a] * x[a];
      m += v[a] * v[a];
    }
    CHECK(std::sqrt(m) == doctest::Approx(1.7 / std::sqrt(r)).epsilon(1e-13));
    CHECK(b.magnitude(x) == doctest::Approx(1.7 / std::sqrt(r)).epsilon(1e-13));
  }
}

TEST_CASE("hardy drift: gradient matches central differences") {
  auto b = make_hardy_drift(3, 0.8, 1);
  std::vector<double> x{0.4, -0.3, 0.5}, J(9), p(3), m(3);
  b.gradient(x, J);
  const double h = 1e-6;
  for (int k = 0; k < 3; ++k) {
    auto xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    b.eval(xp, p);
    b.eval(xm, m);
    for (int a = 0; a < 3; ++a) CHECK(J[a * 3 + k] == doctest::Approx((p[a] - m[a]) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("drift constructors reject bad parameters") {
  CHECK_THROWS(make_hardy_drift(2, 1.0, 1));
  CHECK_THROWS(make_hardy_drift(3, 0.0, 1));
  CHECK_THROWS(make_hardy_drift(3, -1.0, 1));
  CHECK_THROWS(make_hardy_drift(3, 1.0, 0));
  CHECK_THROWS(make_annulus_log_drift(0.0, 0.5, 2.0));
  CHECK_THROWS(make_annulus_log_drift(1.0, 1.0, 2.0));
  CHECK_THROWS(make_annulus_log_drift(1.0, 0.5, 1.0));
  CHECK_THROWS(make_annulus_log_drift(1.0, 0.5, 2.0, 2));
}

TEST_CASE("annulus log drift: vanishes outside, density inside") {
  auto b = make_annulus_log_drift(1.0, 0.5, 2.0);
  auto out = eval(b, {2.0, 0, 0});  // |x| = 1 + 2 alpha
  CHECK(out[0] == 0.0);
  // | |x| - 1 | = 0.25: |b|^2 = C / (0.25 (ln 4)^2)
  const double m = b.magnitude(std::vector<double>{0, 1.25, 0});
  CHECK(m * m == doctest::Approx(1.0 / (0.25 * std::pow(std::log(4.0), 2))).epsilon(1e-13));
  auto v = eval(b, {0, 1.25, 0});
  CHECK(v[0] == 0.0);
  CHECK(v[1] == doctest::Approx(m).epsilon(1e-14));  // radial
  CHECK(b.singular_set() == "sphere |x|=1");
  CHECK(std::isinf(b.magnitude(std::vector<double>{1, 0, 0})));
}

TEST_CASE("annulus log drift: |b|^{2.5} is not locally integrable") {
  // radial quadrature of |b|^q over the two shells lo < | |x|-1 | < hi
  auto b = make_annulus_log_drift(1.0, 0.5, 2.0);
  auto shell = [&](double lo, double hi, double q) {
    const int n = 4000;
    const double a = std::log(lo), c = std::log(hi);
    double s = 0.0;
    for (int side : {-1, 1})
      for (int k = 0; k < n; ++k) {
        const double t = std::exp(a + (k + 0.5) * (c - a) / n);
        const double r = 1.0 + side * t;
        s += 4 * M_PI * r * r * std::pow(b.magnitude(std::vector<double>{r, 0, 0}), q) * t * (c - a) / n;
      }
    return s;
  };
  // per-decade contributions grow once the power beats the log factor, so the
  // integral has no finite limit
  double prev = shell(1e-7, 1e-6, 2.5);
  for (int k = 7; k < 14; ++k) {
    const double cur = shell(std::pow(10.0, -k - 1), std::pow(10.0, -k), 2.5);
    CHECK(cur > prev);
    prev = cur;
  }
  // |b|^2 itself is integrable: decade contributions shrink
  CHECK(shell(1e-9, 1e-8, 2.0) < shell(1e-5, 1e-4, 2.0));
}

TEST_CASE("sum, scaled and constant drifts") {
  auto h = make_hardy_drift(3, 1.0, 1);
  auto c = DriftField::constant({1, 2, 3});
  auto s = DriftField::sum({h, c});
  auto v = eval(s, {2, 0, 0});
  CHECK(v[0] == doctest::Approx(0.5 + 1));
  CHECK(v[1] == doctest::Approx(2));
  auto neg = s.scaled(-2.0);
  auto w = eval(neg, {2, 0, 0});
  CHECK(w[0] == doctest::Approx(-3.0));
  CHECK(w[2] == doctest::Approx(-6.0));
  CHECK(DriftField::zero(3).magnitude(std::vector<double>{1, 1, 1}) == 0.0);
}

TEST_CASE("linear drift evaluates A x with constant gradient") {
  auto b = DriftField::linear(3, {1, 2, 0, 0, -1, 0, 0.5, 0, 3});
  auto v = eval(b, {1, 1, 1});
  CHECK(v[0] == doctest::Approx(3));
  CHECK(v[1] == doctest::Approx(-1));
  CHECK(v[2] == doctest::Approx(3.5));
  std::vector<double> J(9);
  b.gradient(std::vector<double>{5, -2, 1}, J);
  CHECK(J[1] == 2.0);
  CHECK(J[8] == 3.0);
}

TEST_CASE("separable drift h(T.x) e") {
  SeparableParams p;
  p.profile = {0.0, 1.0, 4.0};
  p.t0 = 0.0;
  p.dt = 1.0;
  p.map = {1, 0, 0};
  p.direction = {0, 0, 2};  // normalized by the constructor
  auto b = DriftField::separable(3, p);
  auto v = eval(b, {1.5, 7, 7});
  CHECK(v[0] == 0.0);
  CHECK(v[2] == doctest::Approx(2.5));
  CHECK_THROWS(DriftField::separable(2, p));
}

TEST_CASE("capped sampling keeps direction and caps magnitude") {
  BoxGrid g(3, 1.0, 8);
  auto b = make_hardy_drift(3, 1.0, 1);
  const double cap = 1.0 / g.spacing();
  auto s = b.sample_capped(g);
  std::vector<double> x(3);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.point(i, x);
    const double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    CHECK(s.magnitude(i) == doctest::Approx(std::min(cap, 1.0 / r)).epsilon(1e-12));
  }
}

TEST_CASE("drift json round trip") {
  for (auto b : {make_hardy_drift(3, 0.3, -1), make_annulus_log_drift(2.0, 0.3, 1.5),
                 DriftField::sum({make_hardy_drift(3, 0.3, 1), DriftField::constant({0, 1, 0})}).scaled(0.5),
                 DriftField::linear(3, {1, 0, 0, 0, 2, 0, 0, 0, 3})}) {
    auto j = b.to_json();
    auto c = drift_from_json(j);
    CHECK(c.kind() == b.kind());
    for (auto x : {std::vector<double>{0.3, 0.2, 1.0}, std::vector<double>{-1.1, 0.05, 0.0}}) {
      auto u = eval(b, x), v = eval(c, x);
      for (int a = 0; a < 3; ++a) CHECK(u[a] == doctest::Approx(v[a]).epsilon(1e-14));
    }
  }
  CHECK_THROWS(drift_from_json(nlohmann::json{{"kind", "vortex"}, {"d", 3}}));
  CHECK_THROWS(drift_from_json(nlohmann::json{{"kind", "hardy"}, {"d", 2}, {"beta", 1.0}}));
}

TEST_CASE("grid_sampled drift from file interpolates the samples") {
  BoxGrid g(3, 2.0, 16);
  VectorField v(g);
  std::vector<double> x(3);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.point(i, x);
    v.comp[0][i] = std::sin(M_PI * x[0] / 2.0);
    v.comp[1][i] = 1.0;
    v.comp[2][i] = x[2];
  }
  const auto dir = std::filesystem::temp_directory_path() / "fbl_test_drift";
  std::filesystem::create_directories(dir);
  write_grid_file((dir / "b.fblg").string(), v);
  auto b = drift_from_json(nlohmann::json{{"kind", "grid_sampled"}, {"d", 3}, {"file", "b.fblg"}}, dir.string());
  CHECK(b.kind() == DriftKind::grid_sampled);
  g.point(100, x);
  auto out = eval(b, x);
  CHECK(out[0] == doctest::Approx(v.comp[0][100]).epsilon(1e-14));
  CHECK(out[1] == doctest::Approx(1.0));
  CHECK(b.differentiable());
}

TEST_CASE("unit ball volume") {
  CHECK(unit_ball_volume(3) == doctest::Approx(4.0 * M_PI / 3.0).epsilon(1e-15));
  CHECK(unit_ball_volume(4) == doctest::Approx(M_PI * M_PI / 2.0).epsilon(1e-15));
}
