#include "fbl/thresholds.hpp"

#include <cmath>
#include <limits>

namespace fbl {
namespace {

// mu is usually set exactly to a threshold computed the same way; allow round-off.
bool at_least(double mu, double threshold) { return mu >= threshold * (1.0 - 1e-12); }

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

nlohmann::json ThresholdSet::to_json() const {
  return {{"d", d},
          {"q", q},
          {"p", p},
          {"delta", delta},
          {"c_delta", c_delta},
          {"sigma", sigma},
          {"beta_2q", beta_2q},
          {"p_c", std::isfinite(p_c) ? nlohmann::json(p_c) : nlohmann::json("inf")},
          {"mu_E1", mu_E1},
          {"c_hat", c_hat},
          {"mu_dual", mu_dual},
          {"kappa_star", kappa_star},
          {"delta_zero", delta_zero},
          {"e1_delta_ok", e1_delta_ok},
          {"p_ok", p_ok},
          {"gradient_ok", gradient_ok},
          {"dual_ok", dual_ok}};
}

ThresholdSet thresholds(int d, int q, double p, double delta, double c_delta, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("thresholds: sigma must be positive");
  if (delta < 0.0 || c_delta < 0.0) throw std::invalid_argument("thresholds: delta and c_delta must be >= 0");
  ThresholdSet t;
  t.d = d;
  t.q = q;
  t.p = p;
  t.delta = delta;
  t.c_delta = c_delta;
  t.sigma = sigma;
  const double s2 = sigma * sigma;
  const double sd = std::sqrt(delta);
  t.beta_2q = 1.0 + 4.0 * q * d;
  t.p_c = sd < s2 ? 1.0 / (1.0 - sd / s2) : std::numeric_limits<double>::infinity();
  if (delta > 0.0) {
    t.mu_E1 = c_delta / (4.0 * sd * p);
    t.c_hat = 2.0 * q * d * c_delta / sd + c_delta / (2.0 * sd);
    t.mu_dual = 3.0 * c_delta / (4.0 * sd);
  } else {
    t.delta_zero = true;
  }
  t.kappa_star = 0.5 * s2 - t.beta_2q * sd;
  t.e1_delta_ok = sd < s2;
  t.p_ok = p > t.p_c;
  t.gradient_ok = sd < s2 / (2.0 * t.beta_2q);
  t.dual_ok = sd < s2 / 6.0;
  return t;
}

void require_E1_gates(const ThresholdSet& th, double mu) {
  if (!th.e1_delta_ok)
    throw GateError("E1", "sqrt(delta) < sigma^2 violated (sqrt(delta)=" + num(std::sqrt(th.delta)) +
                              ", sigma^2=" + num(th.sigma * th.sigma) + ")");
  if (!th.p_ok) throw GateError("E1", "p > p_c violated (p=" + num(th.p) + ", p_c=" + num(th.p_c) + ")");
  if (!at_least(mu, th.mu_E1))
    throw GateError("E1", "mu >= mu_E1 violated (mu=" + num(mu) + ", mu_E1=" + num(th.mu_E1) + ")");
}

void require_gradient_gates(const ThresholdSet& th, double mu) {
  if (!th.gradient_ok)
    throw GateError("gradL2", "sqrt(delta) < sigma^2/(2 beta_2q) violated (sqrt(delta)=" + num(std::sqrt(th.delta)) +
                                  ", limit=" + num(th.sigma * th.sigma / (2.0 * th.beta_2q)) + ")");
  if (!(th.kappa_star > 0.0)) throw GateError("gradL2", "kappa_* = sigma^2/2 - beta_2q sqrt(delta) > 0 violated");
  if (!at_least(mu, th.c_hat))
    throw GateError("gradL2", "mu >= c_hat violated (mu=" + num(mu) + ", c_hat=" + num(th.c_hat) + ")");
}

void require_dual_gates(const ThresholdSet& th, double mu) {
  if (!th.dual_ok)
    throw GateError("dual", "sqrt(delta) < sigma^2/6 violated (sqrt(delta)=" + num(std::sqrt(th.delta)) +
                                ", limit=" + num(th.sigma * th.sigma / 6.0) + ")");
  if (!at_least(mu, th.mu_dual))
    throw GateError("dual", "mu >= 3 c_delta/(4 sqrt(delta)) violated (mu=" + num(mu) + ", mu_dual=" +
                                num(th.mu_dual) + ")");
}

double dual_bracket(double sigma, double delta, double kappa, double theta, double eps) {
  const double tk = theta * std::sqrt(kappa);
  return 0.5 * sigma * sigma * (1.0 - tk) - 3.0 * std::sqrt(delta) * (1.0 + 0.5 * eps) -
         2.0 * tk * delta * (1.0 + eps);
}

double e2_bracket(double sigma, double delta, double kappa, double theta, double nu, double eps, double gamma,
                  double alpha) {
  return 0.5 * sigma * sigma - nu * delta * (1.0 + eps) - 1.0 / (4.0 * nu) - sigma * gamma -
         0.5 * sigma * sigma * theta * std::sqrt(kappa) / (4.0 * alpha);
}

}  // namespace fbl
