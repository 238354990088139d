#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbl/drift.hpp"

namespace fbl {

/// Euler-Maruyama settings for X_t = x - int_0^t b(X_r) dr + sigma B_t.
struct PathConfig {
  double sigma = 1.4142135623730951;
  double mu = 0.0;
  double dt = 1e-3;
  double T = 1.0;
  int n_paths = 1;
  double r_cap = 0.0;  // Hardy parts: evaluate at max(|x|, r_cap); other kinds: |b| <= 1/r_cap
  std::uint64_t seed = 0;
  int n_snapshots = 1;  // evenly spaced snapshot times in (0, T]; t = 0 is always stored

  void validate() const;
  nlohmann::json to_json() const;
};

/// b under the cap rule of PathConfig.
void capped_drift(const DriftField& b, std::span<const double> x, double r_cap, std::span<double> out);

struct Trajectories {
  int d = 3;
  int n_starts = 0;
  int n_paths = 0;                 // per start point
  std::vector<double> times;       // snapshot times, times[0] = 0
  std::vector<double> positions;   // [(start * n_paths + path) * n_times + snap] * d

  const double* at(int start, int path, int snap) const {
    return positions.data() +
           ((static_cast<std::size_t>(start) * n_paths + path) * times.size() + snap) * static_cast<std::size_t>(d);
  }
};

/// Independent paths for every start point; path (start, k) draws its noise
/// from stream (seed, start * n_paths + k).
Trajectories simulate_paths(const DriftField& b, std::span<const double> starts, const PathConfig& cfg);

/// Gaussian increments of one realization: steps * d standard normals.
std::vector<double> realization_noise(const PathConfig& cfg, std::uint64_t realization, int steps, int d);

struct FlowEnsemble {
  int d = 3;
  int n_starts = 0;
  int n_realizations = 0;
  bool shared_noise = true;
  bool has_jacobian = false;
  long nonpositive_det = 0;           // count of (realization, start, snapshot) with det J <= 0
  std::vector<double> starts;         // n_starts * d
  std::vector<double> times;          // snapshot times, times[0] = 0
  std::vector<double> positions;      // [((r * n_times + s) * n_starts + i) * d]
  std::vector<double> jacobians;      // [((r * n_times + s) * n_starts + i) * d * d], row-major J
  std::vector<double> noise;          // sigma B_t per realization and snapshot: [(r * n_times + s) * d]

  std::size_t slot(int r, int s, int i) const {
    return (static_cast<std::size_t>(r) * times.size() + static_cast<std::size_t>(s)) * n_starts + i;
  }
  const double* position(int r, int s, int i) const { return positions.data() + slot(r, s, i) * d; }
  const double* jacobian(int r, int s, int i) const { return jacobians.data() + slot(r, s, i) * d * d; }
  const double* brownian(int r, int s) const {
    return noise.data() + (static_cast<std::size_t>(r) * times.size() + s) * d;
  }
};

/// Flow Psi_t on a set of start points: every start point of realization r is
/// driven by the same increments, realization_noise(cfg, first_realization + r).
/// J_{k+1} = (I - grad b(X_k) dt) J_k when b is differentiable.
FlowEnsemble simulate_flow(const DriftField& b, std::span<const double> starts, const PathConfig& cfg,
                           int n_realizations, std::uint64_t first_realization = 0);

struct InverseResult {
  std::vector<double> y;
  int nearest = -1;
  double residual = 0.0;  // linearization estimate of |Psi_t(y) - x|
  bool extrapolated = false;
  bool singular = false;
};

/// y ~ Psi_t^{-1}(x): nearest forward image, then one Newton step with J^{-1}.
InverseResult invert_flow(const FlowEnsemble& ens, int snap, int realization, std::span<const double> x);

struct MCEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  long n = 0;          // samples used
  long dropped = 0;    // samples dropped (unresolved inversion, singular Jacobian)
  double max_residual = 0.0;

  nlohmann::json to_json() const;
};

using ScalarFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<void(std::span<const double>, std::span<double>)>;

/// Local start grid used per realization to invert the flow at a query point.
struct InversionOptions {
  int points_per_axis = 5;
  double spacing = 0.05;
  int max_recentre = 4;
};

/// E[u(t,x)^2] with u(t) = e^{-mu t} f(Psi_t^{-1}) for the flow of the moment
/// equation's velocity: the paths solve dX = +b dt + sigma dB.
MCEstimate mc_second_moment(const ScalarFn& f, const DriftField& b, std::span<const double> x, double t,
                            const PathConfig& cfg, int n_realizations, const InversionOptions& inv = {});

/// E[|grad u(t,x)|^{2q}], grad u = e^{-mu t} (grad f)(y) J_y(t)^{-1}, same flow as above.
MCEstimate mc_gradient_moment(const GradientFn& grad_f, const DriftField& b, std::span<const double> x, double t,
                              const PathConfig& cfg, int n_realizations, int q = 1, const InversionOptions& inv = {});

// --- criticality --------------------------------------------------------------

struct ProbeConfig {
  int d = 3;
  std::vector<double> betas{0.5, 0.8, 1.0, 1.2, 1.5};
  double sigma = 1.4142135623730951;
  std::vector<double> x0{0.5, 0.0, 0.0};
  double eps_ball = 1e-3;
  double T = 5.0;
  double dt0 = 1e-3;
  int n_paths = 10000;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct ProbeRow {
  double beta = 0.0;
  long hits = 0;
  long n = 0;
  double hit_fraction = 0.0;
  double stderr_ = 0.0;
  double q05 = 0.0;  // quantiles of the per-path minimum distance to the origin
  double q50 = 0.0;
  long steps = 0;    // total EM steps over all paths
};

/// Hardy drift with inward sign, X = x - int beta X/|X|^2 dr + sigma B, adaptive
/// dt = min(dt0, |X|^2 dt0 / beta), r_cap = eps_ball / 4.
std::vector<ProbeRow> criticality_probe(const ProbeConfig& cfg);

/// Linear interpolation of the beta where the hit fraction first crosses `level`;
/// NaN when the sweep never crosses it.
double crossing_beta(const std::vector<ProbeRow>& rows, double level);

}  // namespace fbl
