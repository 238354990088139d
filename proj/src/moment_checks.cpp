#include <cmath>

#include "fbl/moments.hpp"

namespace fbl {
namespace {

double margin_of(double lhs, double bound) {
  if (bound > 0.0) return lhs / bound - 1.0;
  return lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

void finish(CheckReport& r) {
  r.margin = margin_of(r.lhs, r.constant * r.bound);
  r.pass = r.lhs <= r.constant * r.bound * (1.0 + r.tolerance) || (r.bound == 0.0 && r.lhs == 0.0);
  if (!r.pass) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "measured margin %.6g exceeds tolerance %.3g", r.margin, r.tolerance);
    r.gate = buf;
  }
}

}  // namespace

nlohmann::json CheckReport::to_json() const {
  nlohmann::json j = {{"name", name},           {"tag", tag},   {"lhs", lhs},   {"bound", bound},
                      {"constant", constant},   {"tolerance", tolerance},
                      {"margin", std::isfinite(margin) ? nlohmann::json(margin) : nlohmann::json("inf")},
                      {"pass", pass},           {"refused", refused}};
  if (!gate.empty()) j["gate"] = gate;
  if (!details.empty()) j["details"] = details;
  return j;
}

CheckReport refused_report(const std::string& name, const std::string& tag, const GateError& e) {
  CheckReport r;
  r.name = name;
  r.tag = tag;
  r.refused = true;
  r.pass = false;
  r.gate = e.condition();
  return r;
}

E1Check::E1Check(const ScalarField& f, double p, const ThresholdSet& th, double mu, double tol) : p_(p), tol_(tol) {
  require_E1_gates(th, mu);
  ScalarField f2(f.grid);
  for (std::size_t i = 0; i < f.size(); ++i) f2[i] = f[i] * f[i];
  bound_ = lp_norm(f2, p);  // = ||f||_{2p}^2
  f_norm_p_ = std::pow(lp_norm(f, 2.0 * p), p);
  gates_ = {{"p", p}, {"p_c", th.p_c}, {"mu", mu}, {"mu_E1", th.mu_E1}, {"sqrt_delta", std::sqrt(th.delta)},
            {"sigma_sq", th.sigma * th.sigma}};
}

void E1Check::observe(double t, const ScalarField& v) {
  sup_ = std::max(sup_, lp_norm(v, p_));
  ScalarField vp(v.grid);
  for (std::size_t i = 0; i < v.size(); ++i) vp[i] = std::pow(std::max(v[i], 0.0), 0.5 * p_);
  const double e = dirichlet_energy(vp);
  if (started_) dissipation_ += 0.5 * (e + last_energy_) * (t - last_t_);
  started_ = true;
  last_t_ = t;
  last_energy_ = e;
}

CheckReport E1Check::report() const {
  CheckReport r;
  r.name = "E1: sup_t ||E u^2||_p <= ||f||_{2p}^2";
  r.tag = "E1";
  r.lhs = sup_;
  r.bound = bound_;
  r.tolerance = tol_;
  r.details = gates_;
  r.details["dissipation_integral"] = dissipation_;
  r.details["implied_C1"] = f_norm_p_ > 0.0 ? dissipation_ / f_norm_p_ : 0.0;
  finish(r);
  return r;
}

GradientCheck::GradientCheck(const MatrixField& V0, const ThresholdSet& th, double mu, double tol) : tol_(tol) {
  require_gradient_gates(th, mu);
  bound_ = gradient_energy(V0);
  gates_ = {{"mu", mu}, {"c_hat", th.c_hat}, {"beta_2q", th.beta_2q}, {"kappa_star", th.kappa_star},
            {"sqrt_delta", std::sqrt(th.delta)}, {"limit", th.sigma * th.sigma / (2.0 * th.beta_2q)}};
}

void GradientCheck::observe(double t, const MatrixField& V) {
  sup_ = std::max(sup_, gradient_energy(V));
  double e = 0.0;
  const int d = V.grid.dim();
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      ScalarField c(V.grid);
      c.data = V.comp[V.packed_index(i, j)];
      e += (i == j ? 1.0 : 2.0) * dirichlet_energy(c);
    }
  if (started_) dissipation_ += 0.5 * (e + last_energy_) * (t - last_t_);
  started_ = true;
  last_t_ = t;
  last_energy_ = e;
}

CheckReport GradientCheck::report() const {
  CheckReport r;
  r.name = "gradL2: sup_t sum_I <V_I^2> <= sum_I <V_I(0)^2>";
  r.tag = "gradL2";
  r.lhs = sup_;
  r.bound = bound_;
  r.tolerance = tol_;
  r.details = gates_;
  r.details["dissipation_integral"] = dissipation_;
  r.details["implied_constant"] = bound_ > 0.0 ? dissipation_ / bound_ : 0.0;
  finish(r);
  return r;
}

DualCheck::DualCheck(const ScalarField& v0, const WeightParams& w, const ThresholdSet& th, double mu, double tol)
    : weight_(w), tol_(tol) {
  w.validate();
  require_dual_gates(th, mu);
  const double bracket = dual_bracket(th.sigma, th.delta, w.kappa, w.theta);
  if (!(bracket > 0.0))
    throw GateError("dual", "weighted energy bracket > 0 violated (bracket=" + std::to_string(bracket) + ")");
  const auto r = rho_samples(w, v0.grid);
  inv_rho_.resize(r.size());
  // ||rho^-1 v0||_4^2 = (int rho^-4 v0^4)^{1/2}
  double s4 = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    inv_rho_[i] = 1.0 / r[i];
    const double a = inv_rho_[i] * v0[i];
    s4 += a * a * a * a;
  }
  bound_ = std::sqrt(s4 * v0.grid.cell_volume());
  gates_ = {{"mu", mu}, {"mu_dual", th.mu_dual}, {"sqrt_delta", std::sqrt(th.delta)},
            {"limit", th.sigma * th.sigma / 6.0}, {"kappa", w.kappa}, {"theta", w.theta}, {"bracket", bracket}};
}

void DualCheck::observe(double, const ScalarField& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double a = inv_rho_[i] * w[i];
    s += a * a;
  }
  sup_ = std::max(sup_, std::sqrt(s * w.grid.cell_volume()));
}

CheckReport DualCheck::report() const {
  CheckReport r;
  r.name = "dual: sup_t ||rho^-1 E[v^2]||_2 <= ||rho^-1 v0||_4^2";
  r.tag = "dual";
  r.lhs = sup_;
  r.bound = bound_;
  r.tolerance = tol_;
  r.details = gates_;
  finish(r);
  return r;
}

CheckReport check_E1(const ScalarSeries& v, const ScalarField& f, double p, const ThresholdSet& th, double mu,
                     double tol) {
  E1Check c(f, p, th, mu, tol);
  for (std::size_t k = 0; k < v.snapshots.size(); ++k) c.observe(v.times[k], v.snapshots[k]);
  return c.report();
}

CheckReport check_gradient_bound(const MatrixSeries& V, const ThresholdSet& th, double mu, double tol) {
  GradientCheck c(V.snapshots.front(), th, mu, tol);
  for (std::size_t k = 0; k < V.snapshots.size(); ++k) c.observe(V.times[k], V.snapshots[k]);
  return c.report();
}

CheckReport check_dual_weighted_bound(const ScalarSeries& w, const ScalarField& v0, const WeightParams& wp,
                                      const ThresholdSet& th, double mu, double tol) {
  DualCheck c(v0, wp, th, mu, tol);
  for (std::size_t k = 0; k < w.snapshots.size(); ++k) c.observe(w.times[k], w.snapshots[k]);
  return c.report();
}

}  // namespace fbl
