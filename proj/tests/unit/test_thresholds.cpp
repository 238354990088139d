#include <doctest.h>

#include <cmath>

#include "fbl/thresholds.hpp"

using namespace fbl;

TEST_CASE("beta_2q and the closed-form constants") {
  auto t = thresholds(3, 1, 2.0, 0.04, 0.04, std::sqrt(2.0));
  CHECK(t.beta_2q == 13.0);
  CHECK(thresholds(3, 2, 2.0, 0.04, 0.04, 1.0).beta_2q == 25.0);
  CHECK(thresholds(4, 1, 2.0, 0.04, 0.04, 1.0).beta_2q == 17.0);
  const double sd = 0.2;
  CHECK(t.p_c == doctest::Approx(1.0 / (1.0 - sd / 2.0)).epsilon(1e-15));
  CHECK(t.mu_E1 == doctest::Approx(0.04 / (4 * sd * 2.0)).epsilon(1e-15));
  CHECK(t.c_hat == doctest::Approx(2 * 1 * 3 * 0.04 / sd + 0.04 / (2 * sd)).epsilon(1e-15));
  CHECK(t.mu_dual == doctest::Approx(3 * 0.04 / (4 * sd)).epsilon(1e-15));
  CHECK(t.kappa_star == doctest::Approx(1.0 - 13 * sd).epsilon(1e-14));
  CHECK(t.e1_delta_ok);
  CHECK(t.p_ok);
  CHECK_FALSE(t.gradient_ok);  // 0.2 >= 2 / 26
  CHECK(t.dual_ok);            // 0.2 < 2 / 6
}

TEST_CASE("p_c limits") {
  CHECK(thresholds(3, 1, 2.0, 1e-14, 1e-14, 1.0).p_c == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(thresholds(3, 1, 2.0, 1.0, 1.0, std::sqrt(2.0)).p_c == doctest::Approx(2.0).epsilon(1e-14));
  // exact boundary with sigma = 1: sqrt(delta) = sigma^2 / 2
  auto b = thresholds(3, 1, 2.0, 0.25, 0.25, 1.0);
  CHECK(b.p_c == 2.0);
  CHECK_FALSE(b.p_ok);  // p = p_c is excluded
  CHECK(thresholds(3, 1, 2.0 + 1e-9, 0.25, 0.25, 1.0).p_ok);
  auto c = thresholds(3, 1, 2.0, 1.0, 1.0, 1.0);  // sqrt(delta) = sigma^2
  CHECK(std::isinf(c.p_c));
  CHECK_FALSE(c.e1_delta_ok);
}

TEST_CASE("delta = 0 reports zero mu thresholds") {
  auto t = thresholds(3, 1, 1.5, 0.0, 0.0, 1.0);
  CHECK(t.delta_zero);
  CHECK(t.mu_E1 == 0.0);
  CHECK(t.c_hat == 0.0);
  CHECK(t.mu_dual == 0.0);
  CHECK(t.p_c == 1.0);
  CHECK(t.gradient_ok);
  CHECK_NOTHROW(require_E1_gates(t, 0.0));
  CHECK_NOTHROW(require_gradient_gates(t, 0.0));
  CHECK_NOTHROW(require_dual_gates(t, 0.0));
}

TEST_CASE("gates name the violated condition") {
  const double sigma = std::sqrt(2.0);
  auto t = thresholds(3, 1, 2.0, 0.04, 0.04, sigma);
  CHECK_NOTHROW(require_E1_gates(t, t.mu_E1));
  try {
    require_E1_gates(t, 0.5 * t.mu_E1);
    FAIL("expected refusal");
  } catch (const GateError& e) {
    CHECK(e.check() == "E1");
    CHECK(e.condition().find("mu") != std::string::npos);
  }
  CHECK_THROWS_AS(require_gradient_gates(t, t.c_hat), GateError);
  auto s = thresholds(3, 1, 2.0, 0.002, 0.002, sigma);
  CHECK(s.gradient_ok);
  CHECK_NOTHROW(require_gradient_gates(s, s.c_hat));
  CHECK_THROWS_AS(require_gradient_gates(s, 0.99 * s.c_hat), GateError);

  auto r = thresholds(3, 1, 1.5, 0.25, 0.25, 1.0);  // p_c = 2 > 1.5
  try {
    require_E1_gates(r, 10.0);
    FAIL("expected refusal");
  } catch (const GateError& e) {
    CHECK(e.condition().find("p > p_c") != std::string::npos);
  }
  CHECK_THROWS_AS(require_dual_gates(thresholds(3, 1, 2.0, 1.0, 1.0, sigma), 100.0), GateError);
}

TEST_CASE("dual bracket") {
  // kappa -> 0: sigma^2/2 - 3 sqrt(delta)(1 + eps/2)
  CHECK(dual_bracket(std::sqrt(2.0), 0.01, 1e-30, 2.0, 0.1) == doctest::Approx(1.0 - 3 * 0.1 * 1.05).epsilon(1e-12));
  const double a = dual_bracket(std::sqrt(2.0), 0.002, 1e-4, 2.0);
  const double b = dual_bracket(std::sqrt(2.0), 0.002, 1e-2, 2.0);
  CHECK(a > b);
  CHECK(a > 0.0);
  CHECK(dual_bracket(std::sqrt(2.0), 0.2, 1e-4, 2.0) < 0.0);
}
