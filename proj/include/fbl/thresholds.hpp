#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

namespace fbl {

/// Admissibility constants of the moment estimates.
struct ThresholdSet {
  int d = 3;
  int q = 1;
  double p = 2.0;
  double delta = 0.0;
  double c_delta = 0.0;
  double sigma = 1.0;

  double beta_2q = 0.0;     // 1 + 4 q d
  double p_c = 1.0;         // 1 / (1 - sqrt(delta)/sigma^2), +inf when sqrt(delta) >= sigma^2
  double mu_E1 = 0.0;       // c_delta / (4 sqrt(delta) p)
  double c_hat = 0.0;       // 2 q d c_delta / sqrt(delta) + c_delta / (2 sqrt(delta))
  double mu_dual = 0.0;     // 3 c_delta / (4 sqrt(delta))
  double kappa_star = 0.0;  // sigma^2/2 - beta_2q sqrt(delta)
  bool delta_zero = false;  // mu thresholds reported as 0

  bool e1_delta_ok = false;    // sqrt(delta) < sigma^2
  bool p_ok = false;           // p > p_c
  bool gradient_ok = false;    // sqrt(delta) < sigma^2 / (2 beta_2q)
  bool dual_ok = false;        // sqrt(delta) < sigma^2 / 6

  nlohmann::json to_json() const;
};

ThresholdSet thresholds(int d, int q, double p, double delta, double c_delta, double sigma);

/// Raised when an admissibility gate fails; `condition` names the violated inequality.
class GateError : public std::runtime_error {
public:
  GateError(std::string check, std::string condition)
      : std::runtime_error(check + " refused: " + condition), check_(std::move(check)),
        condition_(std::move(condition)) {}
  const std::string& check() const { return check_; }
  const std::string& condition() const { return condition_; }

private:
  std::string check_;
  std::string condition_;
};

void require_E1_gates(const ThresholdSet& th, double mu);
void require_gradient_gates(const ThresholdSet& th, double mu);
void require_dual_gates(const ThresholdSet& th, double mu);

/// Coefficient of <|grad w|^2> in the weighted dual energy estimate with
/// gamma = 1/(2 sqrt(delta)), slack eps on the form-bound terms:
/// sigma^2/2 (1 - theta sqrt(kappa)) - 3 sqrt(delta)(1 + eps/2) - 2 theta sqrt(kappa) delta (1 + eps).
double dual_bracket(double sigma, double delta, double kappa, double theta, double eps = 0.1);

/// sigma^2/2 - nu delta (1+eps) - 1/(4 nu) - sigma gamma - (sigma^2/2) theta sqrt(kappa) / (4 alpha).
double e2_bracket(double sigma, double delta, double kappa, double theta, double nu, double eps, double gamma,
                  double alpha);

}  // namespace fbl
