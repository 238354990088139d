#include <doctest.h>

#include <cmath>

#include "fbl/drift.hpp"
#include "fbl/regularize.hpp"

using namespace fbl;

namespace {

double max_abs_diff(const VectorField& a, const VectorField& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.comp.size(); ++k)
    for (std::size_t i = 0; i < a.grid.size(); ++i) m = std::max(m, std::abs(a.comp[k][i] - b.comp[k][i]));
  return m;
}

double l2(const VectorField& a, const VectorField& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.comp.size(); ++k)
    for (std::size_t i = 0; i < a.grid.size(); ++i) s += std::pow(a.comp[k][i] - b.comp[k][i], 2);
  return std::sqrt(s * a.grid.cell_volume());
}

// eta_m e^{eps Delta} T - T measured in L^d on g
double defect_on(const DriftField& b, int m, double eps, const BoxGrid& g) {
  const auto t = truncate_drift(b, m, g);
  auto s = heat_smooth(t, eps);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double e = cutoff_eta(std::sqrt(g.radius_sq(i)), m);
    for (auto& c : s.comp) c[i] *= e;
  }
  return ld_distance(s, t, g.dim());
}

}  // namespace

TEST_CASE("truncation keeps bounded compactly supported fields") {
  BoxGrid g(3, 3.0, 24);
  auto b = DriftField::constant({0.5, 0.0, 0.0});
  auto t = truncate_drift(b, 2, g);
  std::vector<double> x(3);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = std::sqrt(g.radius_sq(i));
    CHECK(t.comp[0][i] == (r <= 2.0 ? 0.5 : 0.0));
  }
}

TEST_CASE("truncated Hardy field vanishes near the origin and outside B(0,m)") {
  BoxGrid g(3, 3.0, 48);
  auto b = make_hardy_drift(3, 1.0, 1);
  auto t = truncate_drift(b, 2, g);
  std::vector<double> x(3);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = std::sqrt(g.radius_sq(i));
    const double mag = t.magnitude(i);
    if (r < 0.5 || r > 2.0) CHECK(mag == 0.0);
    else CHECK(mag == doctest::Approx(1.0 / r).epsilon(1e-12));
  }
  CHECK_THROWS(truncate_drift(b, 3, g));  // grid must cover B(0, m+1)
}

TEST_CASE("truncated annulus field drops the set where |b| > m") {
  BoxGrid g(3, 5.0, 40);
  auto b = make_annulus_log_drift(1.0, 0.5, 2.0);
  auto t = truncate_drift(b, 4, g);
  std::vector<double> x(3);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.point(i, x);
    const double mag = b.magnitude(x);
    CHECK(t.magnitude(i) == doctest::Approx(mag <= 4.0 ? mag : 0.0).epsilon(1e-12));
  }
}

TEST_CASE("heat smoothing: constants are fixed, small eps is close to identity") {
  BoxGrid g(3, 2.0, 16);
  VectorField c(g);
  for (auto& comp : c.comp) std::fill(comp.begin(), comp.end(), 2.5);
  CHECK(max_abs_diff(heat_smooth(c, 0.3), c) < 1e-13);

  VectorField s(g);
  std::vector<double> x(3);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.point(i, x);
    s.comp[0][i] = std::sin(M_PI * x[0] / 2.0) * std::cos(M_PI * x[1] / 2.0);
  }
  const double e1 = l2(heat_smooth(s, 1e-3), s), e2 = l2(heat_smooth(s, 5e-4), s);
  CHECK(e2 / e1 == doctest::Approx(0.5).epsilon(0.01));  // O(eps)
  CHECK_THROWS(heat_smooth(s, 0.0));
}

TEST_CASE("heat smoothing of a spike has second moment 2 eps d") {
  BoxGrid g(3, 4.0, 64);
  VectorField s(g);
  // unit mass on the 8 nodes around the origin
  std::size_t center_cells = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.radius_sq(i) < 3 * std::pow(g.spacing(), 2) / 4 + 1e-12) {
      s.comp[0][i] = 1.0;
      ++center_cells;
    }
  CHECK(center_cells == 8);
  const double eps = 0.2;
  auto h = heat_smooth(s, eps);
  double mass = 0.0, m2 = 0.0, m2_0 = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    mass += h.comp[0][i];
    m2 += h.comp[0][i] * g.radius_sq(i);
    m2_0 += s.comp[0][i] * g.radius_sq(i);
  }
  CHECK((m2 - m2_0) / mass == doctest::Approx(2.0 * eps * 3).epsilon(0.01));
}

TEST_CASE("cutoff profile") {
  CHECK(cutoff_eta(0.3, 2.0) == 1.0);
  CHECK(cutoff_eta(2.0, 2.0) == 1.0);
  CHECK(cutoff_eta(3.0, 2.0) == 0.0);
  CHECK(cutoff_eta(2.5, 2.0) == doctest::Approx(0.5));
  double maxslope = 0.0;
  for (int k = 0; k <= 1000; ++k) {
    const double r = 2.0 + k / 1000.0;
    maxslope = std::max(maxslope, std::abs(cutoff_eta_slope(r, 2.0)));
    const double h = 1e-6;
    if (k > 0 && k < 1000)
      CHECK(cutoff_eta_slope(r, 2.0) ==
            doctest::Approx((cutoff_eta(r + h, 2.0) - cutoff_eta(r - h, 2.0)) / (2 * h)).epsilon(1e-5));
  }
  CHECK(maxslope == doctest::Approx(15.0 / 8.0).epsilon(1e-6));
  CHECK(maxslope <= 2.0);
}

TEST_CASE("talenti constant in d=3") {
  // S_3 = (3 pi)^{-1/2} (Gamma(3)/Gamma(3/2))^{1/3}
  CHECK(talenti_sobolev_constant(3) ==
        doctest::Approx(std::pow(3 * M_PI, -0.5) * std::cbrt(2.0 / (std::sqrt(M_PI) / 2.0))).epsilon(1e-14));
}

TEST_CASE("choose_epsilon: huge gamma returns eps = 1") {
  BoxGrid g(3, 3.0, 16);
  auto c = choose_epsilon(make_hardy_drift(3, 0.5, 1), 1, 1e6, 1.0, g);
  CHECK(c.epsilon == 1.0);
  CHECK(c.exponent == 0);
  CHECK_THROWS(choose_epsilon(make_hardy_drift(3, 0.5, 1), 1, 0.0, 1.0, g));
}

TEST_CASE("choose_epsilon: defect shrinks with eps for a smooth compact field") {
  BoxGrid g(3, 3.0, 32);
  auto b = DriftField::constant({0.0, 0.0, 0.3});
  double prev = INFINITY;
  for (double eps : {0.25, 0.0625, 0.015625, 0.00390625}) {
    const double d = defect_on(b, 1, eps, g);
    CHECK(d < prev);
    prev = d;
  }
  auto c = choose_epsilon(b, 1, 0.05, talenti_sobolev_constant(3), g);
  CHECK(c.defect <= c.threshold);
  CHECK(defect_on(b, 1, c.epsilon, g) == doctest::Approx(c.defect).epsilon(1e-12));
}

TEST_CASE("choose_epsilon survives refinement when sqrt(eps) resolves the grid") {
  auto b = DriftField::constant({0.0, 0.0, 0.3});
  const double cs = talenti_sobolev_constant(3);
  BoxGrid coarse(3, 3.0, 32), fine(3, 3.0, 64);
  for (double gamma : {0.1, 0.2}) {
    auto c = choose_epsilon(b, 2, gamma, cs, coarse);
    REQUIRE(std::sqrt(c.epsilon) >= 0.4 * coarse.spacing());
    CHECK(defect_on(b, 2, c.epsilon, fine) <= 1.1 * c.threshold);
  }
}

TEST_CASE("choose_epsilon on capped Hardy is limited by resolution") {
  // The truncation jumps by 2 across |x| = 1/4, so the continuum defect reaches
  // gamma/c_sob = 0.023 only for eps ~ 1e-12. Any feasible grid has h^2 >> eps,
  // the discrete defect underestimates, and the chosen eps keeps shrinking.
  auto b = make_hardy_drift(3, 0.5, 1);
  const double cs = talenti_sobolev_constant(3);
  BoxGrid coarse(3, 3.0, 32), fine(3, 3.0, 64);
  auto c32 = choose_epsilon(b, 2, 0.01, cs, coarse);
  auto c64 = choose_epsilon(b, 2, 0.01, cs, fine);
  CHECK(c32.defect <= c32.threshold);
  CHECK(c64.defect <= c64.threshold);
  CHECK(c32.epsilon < coarse.spacing() * coarse.spacing());
  CHECK(c64.epsilon < c32.epsilon);
  CHECK(defect_on(b, 2, c32.epsilon, fine) > c32.defect);
}

TEST_CASE("mollified sequence bookkeeping") {
  BoxGrid g(3, 4.0, 32);
  std::vector<double> schedule{0.25, 0.0625, 0.015625};
  SUBCASE("zero drift: b_m = 0 and delta_m = gamma_m") {
    auto seq = build_mollified_sequence(DriftField::zero(3), 0.0, schedule, g);
    REQUIRE(seq.size() == 3);
    for (std::size_t k = 0; k < seq.size(); ++k) {
      CHECK(seq[k].m == static_cast<int>(k + 1));
      CHECK(seq[k].delta_m == doctest::Approx(schedule[k]).epsilon(1e-15));
      const auto& v = *seq[k].field.grid_params().values;
      for (const auto& c : v.comp)
        for (double x : c) CHECK(x == 0.0);
    }
  }
  SUBCASE("Hardy drift: support, delta_m monotone, smoothness") {
    auto b = make_hardy_drift(3, 0.5, 1);
    auto seq = build_mollified_sequence(b, 1.0, schedule, g);
    double prev = INFINITY;
    for (const auto& md : seq) {
      CHECK(md.delta_m == doctest::Approx(std::pow(1.0 + std::sqrt(md.gamma), 2)).epsilon(1e-14));
      CHECK(md.delta_m < prev);
      prev = md.delta_m;
      CHECK(md.ld_defect <= md.ld_threshold);
      CHECK(md.c_sob == doctest::Approx(talenti_sobolev_constant(3)));
      const auto& v = *md.field.grid_params().values;
      double bmax = 0.0, d2max = 0.0;
      const std::size_t s = g.stride(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double r = std::sqrt(g.radius_sq(i));
        if (r >= md.m + 1.0) CHECK(v.magnitude(i) == 0.0);
        bmax = std::max(bmax, v.magnitude(i));
        const int j = g.index_along(i, 0);
        if (j > 0 && j + 1 < g.points_per_axis())
          for (const auto& c : v.comp)
            d2max = std::max(d2max, std::abs(c[i + s] - 2 * c[i] + c[i - s]) / (g.spacing() * g.spacing()));
      }
      // heat-kernel bound |D^2 e^{eps Delta} g| <~ ||g||_inf / eps, up to a modest constant
      CHECK(d2max * md.epsilon <= 10.0 * std::max(bmax, static_cast<double>(md.m)));
      CHECK(md.field.differentiable());
    }
  }
  SUBCASE("schedule validation") {
    std::vector<double> bad{0.1, 0.2};
    CHECK_THROWS(build_mollified_sequence(DriftField::zero(3), 0.0, bad, g));
    std::vector<double> neg{0.1, -0.1};
    CHECK_THROWS(build_mollified_sequence(DriftField::zero(3), 0.0, neg, g));
  }
}

TEST_CASE("smooth compact field is recovered by its last member") {
  BoxGrid g(3, 4.0, 32);
  // linear field, bounded on B(0,1) by |A| = 0.2
  auto b = DriftField::linear(3, {0.2, 0, 0, 0, 0, 0, 0, 0, 0});
  std::vector<double> schedule{0.1, 0.01};
  auto seq = build_mollified_sequence(b, 0.0, schedule, g);
  // inside B(0,1) the member agrees with b up to the smoothing defect
  CHECK(seq.back().l2_distance <= seq.front().l2_distance);
  CHECK(seq.back().l2_distance <= 0.05);
}
