#include <doctest.h>

#include <cmath>

#include "fbl/flowsim.hpp"

using namespace fbl;

namespace {

ProbeConfig probe(std::vector<double> betas, double r0, double T, int n) {
  ProbeConfig c;
  c.betas = std::move(betas);
  c.x0 = {r0, 0.0, 0.0};
  c.T = T;
  c.n_paths = n;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("beta = 0: hitting a small ball is as rare as the Bessel formula says") {
  // P(hit B(0, eps) ever) = eps / |x0| for Brownian motion in d = 3
  auto rows = criticality_probe(probe({0.0}, 1.0, 2.0, 2000));
  REQUIRE(rows.size() == 1);
  const double p = 1e-3;
  CHECK(rows[0].n == 2000);
  CHECK(rows[0].hit_fraction <= p + 3 * std::sqrt(p / 2000.0));
  CHECK(rows[0].q50 > 0.1);
}

TEST_CASE("beta = 3: paths are absorbed and the fraction grows with T") {
  auto short_run = criticality_probe(probe({3.0}, 0.5, 0.2, 500));
  auto long_run = criticality_probe(probe({3.0}, 0.5, 3.0, 500));
  CHECK(long_run[0].hit_fraction >= short_run[0].hit_fraction);
  CHECK(long_run[0].hit_fraction >= 0.95);
  CHECK(long_run[0].q05 < 1e-3);
}

TEST_CASE("probe rows are ordered, reproducible and report stderr") {
  auto c = probe({0.5, 2.0}, 0.5, 1.0, 300);
  auto a = criticality_probe(c);
  auto b = criticality_probe(c);
  REQUIRE(a.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(a[k].beta == c.betas[k]);
    CHECK(a[k].hits == b[k].hits);
    CHECK(a[k].q05 == b[k].q05);
    CHECK(a[k].steps == b[k].steps);
    const double f = a[k].hit_fraction;
    CHECK(f == doctest::Approx(static_cast<double>(a[k].hits) / a[k].n));
    CHECK(a[k].stderr_ == doctest::Approx(std::sqrt(f * (1 - f) / a[k].n)));
    CHECK(a[k].q05 <= a[k].q50);
  }
  CHECK(a[1].hit_fraction >= a[0].hit_fraction);
}

TEST_CASE("crossing_beta interpolates and reports NaN without a crossing") {
  std::vector<ProbeRow> rows(3);
  rows[0].beta = 0.5;
  rows[0].hit_fraction = 0.0;
  rows[1].beta = 1.0;
  rows[1].hit_fraction = 0.4;
  rows[2].beta = 1.5;
  rows[2].hit_fraction = 0.8;
  CHECK(crossing_beta(rows, 0.2) == doctest::Approx(0.75));
  CHECK(crossing_beta(rows, 0.6) == doctest::Approx(1.25));
  CHECK(std::isnan(crossing_beta(rows, 0.9)));
  rows[0].hit_fraction = 0.3;
  CHECK(std::isnan(crossing_beta(rows, 0.2)));  // already above at the first beta: not bracketed
  CHECK(std::isnan(crossing_beta({}, 0.5)));
}
