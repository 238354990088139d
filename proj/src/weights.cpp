#include "fbl/weights.hpp"

#include <cmath>
#include <stdexcept>

namespace fbl {

void WeightParams::validate() const {
  if (!(kappa > 0.0)) throw std::invalid_argument("weight: kappa must be positive");
  if (!(theta > 0.5 * d)) throw std::invalid_argument("weight: theta must exceed d/2");
}

double rho_radial(const WeightParams& w, double r) { return std::pow(1.0 + w.kappa * r * r, -w.theta); }

double rho(const WeightParams& w, std::span<const double> x) {
  double r2 = 0.0;
  for (double v : x) r2 += v * v;
  return std::pow(1.0 + w.kappa * r2, -w.theta);
}

double grad_rho_ratio(const WeightParams& w, double r) {
  const double q = 1.0 + w.kappa * r * r;
  const double drho = w.theta * std::pow(q, -w.theta - 1.0) * 2.0 * w.kappa * r;
  return drho / std::pow(q, -w.theta);
}

nlohmann::json GradRhoReport::to_json() const {
  return {{"bound", bound},
          {"maximizer_radius", maximizer_radius},
          {"ratio_at_maximizer", ratio_at_maximizer},
          {"scan_max", scan_max},
          {"scan_argmax", scan_argmax},
          {"scan_radius", scan_radius},
          {"scan_points", scan_points},
          {"never_exceeds", never_exceeds},
          {"attained", attained}};
}

GradRhoReport grad_rho_ratio_bound(const WeightParams& w, long scan_points, double radius_factor) {
  if (!(w.kappa > 0.0)) throw std::invalid_argument("grad_rho_ratio_bound: kappa must be positive");
  if (scan_points < 2) throw std::invalid_argument("grad_rho_ratio_bound: need at least 2 scan points");
  GradRhoReport rep;
  rep.bound = w.theta * std::sqrt(w.kappa);
  rep.maximizer_radius = 1.0 / std::sqrt(w.kappa);
  rep.ratio_at_maximizer = grad_rho_ratio(w, rep.maximizer_radius);
  rep.scan_radius = radius_factor / std::sqrt(w.kappa);
  rep.scan_points = scan_points;
  for (long j = 0; j < scan_points; ++j) {
    const double r = rep.scan_radius * static_cast<double>(j) / static_cast<double>(scan_points - 1);
    const double q = grad_rho_ratio(w, r);
    if (q > rep.scan_max) {
      rep.scan_max = q;
      rep.scan_argmax = r;
    }
  }
  const double tol = 1e-10 * std::max(1.0, rep.bound);
  rep.never_exceeds = rep.scan_max <= rep.bound + tol;
  rep.attained = std::abs(rep.ratio_at_maximizer - rep.bound) <= tol;
  return rep;
}

std::vector<double> rho_samples(const WeightParams& w, const BoxGrid& g) {
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = std::pow(1.0 + w.kappa * g.radius_sq(i), -w.theta);
  return out;
}

double weighted_lp_integral(std::span<const double> f, double p, const WeightParams& w, const BoxGrid& g) {
  if (!(p >= 1.0)) throw std::invalid_argument("weighted_lp: p must be >= 1");
  if (f.size() != g.size()) throw std::invalid_argument("weighted_lp: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double a = std::abs(f[i]);
    const double ap = (p == 2.0) ? a * a : std::pow(a, p);
    s += ap * std::pow(1.0 + w.kappa * g.radius_sq(i), -w.theta);
  }
  return s * g.cell_volume();
}

double weighted_lp_norm(std::span<const double> f, double p, const WeightParams& w, const BoxGrid& g) {
  return std::pow(weighted_lp_integral(f, p, w, g), 1.0 / p);
}

double weighted_inner(std::span<const double> f, std::span<const double> h, const WeightParams& w,
                      const BoxGrid& g) {
  if (f.size() != g.size() || h.size() != g.size()) throw std::invalid_argument("weighted_inner: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += f[i] * h[i] * std::pow(1.0 + w.kappa * g.radius_sq(i), -w.theta);
  return s * g.cell_volume();
}

}  // namespace fbl
