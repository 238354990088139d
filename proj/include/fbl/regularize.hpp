#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbl/drift.hpp"
#include "fbl/grid.hpp"

namespace fbl {

/// Samples of 1_m b: zero where |x| > m or |b(x)| > m (including the singular set).
VectorField truncate_drift(const DriftField& b, int m, const BoxGrid& grid);

/// Componentwise e^{eps Delta} on the periodic box.
VectorField heat_smooth(const VectorField& field, double eps);

/// Radial cutoff: 1 for r <= m, 0 for r >= m + 1, quintic smoothstep between.
/// The profile slope is at most 15/8.
double cutoff_eta(double r, double m);
/// d eta / d r
double cutoff_eta_slope(double r, double m);

/// Sharp Sobolev constant ||u||_{2d/(d-2)} <= S_d ||grad u||_2 (Talenti).
double talenti_sobolev_constant(int d);

/// Discrete L^d norm of |a - b| (vector magnitude per node).
double ld_distance(const VectorField& a, const VectorField& b, double p);

struct EpsilonChoice {
  double epsilon = 0.0;
  int exponent = 0;        // epsilon = 2^-exponent
  double defect = 0.0;     // achieved ||eta e^{eps Delta} T - T||_d
  double threshold = 0.0;  // gamma / c_sob
};

/// Largest eps = 2^-k, k = 0..k_max, with ||eta_m e^{eps Delta}(1_m b) - 1_m b||_d <= gamma/c_sob.
/// Throws std::runtime_error naming the best achieved defect when no k works.
EpsilonChoice choose_epsilon(const VectorField& truncated, int m, double gamma, double c_sob, int k_max = 40);
EpsilonChoice choose_epsilon(const DriftField& b, int m, double gamma, double c_sob, const BoxGrid& grid,
                             int k_max = 40);

struct MollifyOptions {
  double c_sob = 0.0;        // <= 0 selects the Talenti constant for d
  double lambda = 1.0;       // c_delta_m = lambda * delta_m
  double test_radius = 1.0;  // radius R of the L^2(B_R) distance report
  int k_max = 40;
};

/// One member b_m = eta_m e^{eps_m Delta}(1_m b) of the approximating sequence.
struct MollifiedDrift {
  int m = 0;
  double epsilon = 0.0;
  double gamma = 0.0;
  double delta = 0.0;    // delta of the limit drift
  double delta_m = 0.0;  // (sqrt(delta) + sqrt(gamma))^2
  double lambda = 0.0;
  double c_sob = 0.0;
  double radius = 0.0;   // cutoff radius (eta = 1 on B(0, radius))
  double ld_defect = 0.0;
  double ld_threshold = 0.0;
  double test_radius = 1.0;
  double l2_distance = 0.0;  // ||b_m - b||_{L^2(B_R)}, b capped at 1/h
  DriftField field;          // grid_sampled, with gradient

  FormBoundCertificate certificate() const;
  nlohmann::json meta() const;
};

MollifiedDrift mollify(const DriftField& b, double delta, int m, double gamma, const BoxGrid& grid,
                       const MollifyOptions& opt = {});

/// Members m = 1..M for a strictly decreasing positive schedule gamma_1 > ... > gamma_M.
std::vector<MollifiedDrift> build_mollified_sequence(const DriftField& b, double delta,
                                                     std::span<const double> schedule, const BoxGrid& grid,
                                                     const MollifyOptions& opt = {});

/// Grid file with a meta sidecar holding (m, epsilon, gamma, delta_m, ...).
void write_mollified_drift(const std::string& path, const MollifiedDrift& md);

}  // namespace fbl
