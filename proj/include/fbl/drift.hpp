#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbl/grid.hpp"

namespace fbl {

enum class DriftKind { zero, hardy, annulus_log, separable, grid_sampled, linear, constant, sum };

std::string to_string(DriftKind k);

struct HardyParams {
  double beta = 0.0;
  int sign = 1;
};

/// Radial field with |b|^2 = C / (| |x|-1 | (-ln | |x|-1 |)^beta_exp) on the
/// annulus 1-alpha < |x| < 1+alpha, zero elsewhere.
struct AnnulusLogParams {
  double C = 1.0;
  double alpha = 0.5;
  double beta_exp = 2.0;
};

/// b(x) = h(T.x) e with h piecewise linear through samples on [t0, t0 + (N-1) dt].
struct SeparableParams {
  std::vector<double> profile;
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<double> map;        // row vector T, length d
  std::vector<double> direction;  // unit vector e, length d
};

/// Grid samples evaluated by multilinear interpolation. Derivatives, when
/// present, are stored as gradient[a * d + k] = d b^a / d x_k.
struct GridSampledParams {
  std::shared_ptr<const VectorField> values;
  std::shared_ptr<const std::vector<std::vector<double>>> gradient;
  std::string source;  // file the samples came from, if any
};

struct LinearParams {
  std::vector<double> A;  // row-major d x d, b(x) = A x
};

struct ConstantParams {
  std::vector<double> c;
};

/// Singular vector field b : R^d -> R^d. Every field carries an overall scale
/// factor so that c*b and -b are cheap views of the same data.
class DriftField {
public:
  static DriftField zero(int d);
  static DriftField constant(std::vector<double> c);
  static DriftField linear(int d, std::vector<double> A);
  static DriftField sum(std::vector<DriftField> parts);
  static DriftField grid_sampled(VectorField values, bool with_gradient);
  static DriftField grid_sampled(std::shared_ptr<const VectorField> values,
                                 std::shared_ptr<const std::vector<std::vector<double>>> gradient);
  static DriftField separable(int d, SeparableParams p);

  int dimension() const { return d_; }
  DriftKind kind() const { return kind_; }
  double scale() const { return scale_; }
  bool differentiable() const;
  std::string singular_set() const;

  const HardyParams& hardy() const { return hardy_; }
  const AnnulusLogParams& annulus() const { return annulus_; }
  const SeparableParams& separable_params() const { return separable_; }
  const GridSampledParams& grid_params() const { return grid_; }
  const LinearParams& linear_params() const { return linear_; }
  const ConstantParams& constant_params() const { return constant_; }
  const std::vector<DriftField>& parts() const { return parts_; }

  /// b(x). Returns +inf components on the singular set.
  void eval(std::span<const double> x, std::span<double> out) const;
  /// |b(x)|, computed without forming the vector where a closed form exists.
  double magnitude(std::span<const double> x) const;
  /// Jacobian matrix, out[a * d + k] = d b^a / d x_k. Throws when !differentiable().
  void gradient(std::span<const double> x, std::span<double> out) const;

  DriftField scaled(double c) const;

  /// Samples on the grid with |b| capped at `cap` (direction kept).
  VectorField sample(const BoxGrid& grid, double cap) const;
  /// Cap rule of the grid evaluations: |b| <= 1/h.
  VectorField sample_capped(const BoxGrid& grid) const { return sample(grid, 1.0 / grid.spacing()); }

  nlohmann::json to_json() const;

  friend DriftField make_hardy_drift(int d, double beta, int sign);
  friend DriftField make_annulus_log_drift(double C, double alpha, double beta_exp, int d);
  friend DriftField drift_from_json(const nlohmann::json& j, const std::string& base_dir);

private:
  int d_ = 3;
  DriftKind kind_ = DriftKind::zero;
  double scale_ = 1.0;
  HardyParams hardy_;
  AnnulusLogParams annulus_;
  SeparableParams separable_;
  GridSampledParams grid_;
  LinearParams linear_;
  ConstantParams constant_;
  std::vector<DriftField> parts_;
};

/// sign * beta * x / |x|^2, so |b(x)| = beta / |x|.
DriftField make_hardy_drift(int d, double beta, int sign);
DriftField make_annulus_log_drift(double C, double alpha, double beta_exp, int d = 3);

/// Parses the structured drift block {"kind": ..., ...}. grid_sampled blocks
/// reference a file in the grid format (see gridio.hpp), resolved against base_dir.
DriftField drift_from_json(const nlohmann::json& j, const std::string& base_dir = ".");

/// Volume of the unit ball, pi^{d/2} / Gamma(d/2 + 1).
double unit_ball_volume(int d);

// --- certificates ---------------------------------------------------------

enum class CertMethod { hardy_analytic, strichartz, ld_split, sum, numeric_estimate };
std::string to_string(CertMethod m);

/// Witness of ||b phi||^2 <= delta ||grad phi||^2 + c_delta ||phi||^2.
struct FormBoundCertificate {
  double delta = 0.0;
  double c_delta = 0.0;
  double lambda = 0.0;
  CertMethod method = CertMethod::hardy_analytic;
  std::string provenance;

  double sqrt_delta() const;
  nlohmann::json to_json() const;
};

FormBoundCertificate hardy_certificate(int d, double beta);
FormBoundCertificate strichartz_certificate(int d, double weak_norm);
/// Example-1 style split b = f + h with ||f||_d and ||h||_inf:
/// sqrt(delta) = c_sob ||f||_d + ||h||_inf / sqrt(lambda), c_delta = lambda delta.
FormBoundCertificate ld_split_certificate(int d, double ld_norm, double linf_norm, double lambda, double c_sob);
/// sqrt(delta) = sqrt(delta1) + sqrt(delta2), c_delta = 2 (c1 + c2).
FormBoundCertificate certificate_sum(const FormBoundCertificate& a, const FormBoundCertificate& b);
/// Multiplies delta and c_delta by c^2 (certificate of c*b).
FormBoundCertificate certificate_scaled(const FormBoundCertificate& c, double factor);

struct WeakLdEstimate {
  double value = 0.0;
  double maximizing_s = 0.0;
  int s_samples = 0;
  int resolved_samples = 0;  // levels whose super-level volume is stable under 2x subsampling
  bool stable = true;        // false when no sampled level was resolved
  BoxGrid grid;
};

WeakLdEstimate weak_ld_norm(const DriftField& field, const BoxGrid& grid, int s_samples = 64);
/// Same estimator on already-sampled magnitudes (used by the grid file path).
WeakLdEstimate weak_ld_norm_samples(std::span<const double> magnitude, const BoxGrid& grid, int s_samples = 64);

struct FormBoundEstimate {
  double delta_est = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Largest eigenvalue of (lambda - Delta)^{-1/2} |b|^2 (lambda - Delta)^{-1/2} on
/// the periodic box by power iteration, |b| capped at 1/h.
FormBoundEstimate estimate_form_bound_numeric(const DriftField& field, double lambda, const BoxGrid& grid,
                                              int iters = 500, double tol = 1e-7);
FormBoundEstimate estimate_form_bound_samples(std::span<const double> b_squared, double lambda,
                                              const BoxGrid& grid, int iters = 500, double tol = 1e-7);

}  // namespace fbl
