#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "fbl/grid.hpp"

namespace fbl {

/// rho(x) = (1 + kappa |x|^2)^{-theta}, theta > d/2 so that <rho> < inf.
struct WeightParams {
  double kappa = 1e-4;
  double theta = 2.0;
  int d = 3;

  void validate() const;
};

double rho(const WeightParams& w, std::span<const double> x);
double rho_radial(const WeightParams& w, double r);
/// |grad rho| / rho at radius r, from the analytic derivative.
double grad_rho_ratio(const WeightParams& w, double r);

struct GradRhoReport {
  double bound = 0.0;             // theta sqrt(kappa)
  double maximizer_radius = 0.0;  // 1 / sqrt(kappa)
  double ratio_at_maximizer = 0.0;
  double scan_max = 0.0;
  double scan_argmax = 0.0;
  double scan_radius = 0.0;
  long scan_points = 0;
  bool never_exceeds = false;  // scan_max <= bound (1e-10 relative slack)
  bool attained = false;       // |ratio_at_maximizer - bound| <= 1e-10

  nlohmann::json to_json() const;
};

/// Returns theta sqrt(kappa) together with a radial scan of |grad rho|/rho over
/// [0, radius_factor / sqrt(kappa)].
GradRhoReport grad_rho_ratio_bound(const WeightParams& w, long scan_points = 1000000, double radius_factor = 10.0);

std::vector<double> rho_samples(const WeightParams& w, const BoxGrid& g);

/// int |f|^p rho dx
double weighted_lp_integral(std::span<const double> f, double p, const WeightParams& w, const BoxGrid& g);
/// (int |f|^p rho dx)^{1/p}
double weighted_lp_norm(std::span<const double> f, double p, const WeightParams& w, const BoxGrid& g);
/// int f g rho dx
double weighted_inner(std::span<const double> f, std::span<const double> h, const WeightParams& w,
                      const BoxGrid& g);

}  // namespace fbl
