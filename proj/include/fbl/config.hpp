#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbl/drift.hpp"
#include "fbl/flowsim.hpp"
#include "fbl/grid.hpp"
#include "fbl/weights.hpp"

namespace fbl {

// Experiment file schema (JSON). Every block except "drift" is optional.
//
// {
//   "name": "hardy-e1",
//   "d": 3,
//   "drift": { "kind": "hardy", "beta": 0.1, "sign": 1 },
//   "certificate": { "method": "auto", "lambda": 1.0, "delta": .., "c_delta": .. },
//   "mollify": { "schedule": [0.01], "member": 1, "c_sob": 0, "lambda": 1.0, "test_radius": 1.0 },
//   "grid": { "L": 4.0, "n": 64, "boundary": "periodic" },
//   "solver": { "sigma": 1.4142135623730951, "mu": "auto", "dt": 0, "T": 0.2, "p": 2, "q": 1,
//               "cfl_safety": 0.9, "min_steps": 20, "snapshot_stride": 0 },
//   "initial": { "amplitude": 1.0, "width": 0.5, "center": [0.3, 0, 0] },
//   "weight": { "kappa": 1e-4, "theta": 2.0 },
//   "mc": { "realizations": 200, "dt": 1e-3, "probes": [[0.3,0,0], ...], "spacing": 0.05 },
//   "probe": { "betas": [...], "sigma": .., "x0": [...], "eps_ball": 1e-3, "T": 5, "dt0": 1e-3, "n_paths": 10000 },
//   "checks": ["E1", "gradL2", "dual", "two_est", "mc_pde_xval", "criticality"],
//   "tolerance": 0.02,
//   "seed": 1,
//   "threads": 0,
//   "output": "out"
// }

struct CertificateBlock {
  std::string method = "auto";  // auto | hardy_analytic | strichartz | numeric_estimate | given
  double lambda = 1.0;
  std::optional<double> delta;    // method "given"
  std::optional<double> c_delta;
};

struct MollifyBlock {
  std::vector<double> schedule;  // empty: the solvers use the drift as given
  int member = 0;                // 1-based member driving the solvers; 0 picks the last
  double c_sob = 0.0;
  double lambda = 1.0;
  double test_radius = 1.0;
};

struct SolverBlock {
  double sigma = 1.4142135623730951;
  std::optional<double> mu;  // empty: each check runs at its own threshold
  double dt = 0.0;
  double T = 0.2;
  double p = 2.0;
  int q = 1;
  double cfl_safety = 0.9;
  int min_steps = 20;
  int snapshot_stride = 0;
};

/// f(x) = amplitude * exp(-|x - center|^2 / (2 width^2))
struct InitialBlock {
  double amplitude = 1.0;
  double width = 0.5;
  std::vector<double> center;

  double value(std::span<const double> x) const;
  void gradient(std::span<const double> x, std::span<double> out) const;
};

struct McBlock {
  int realizations = 200;
  double dt = 1e-3;
  std::vector<std::vector<double>> probes;
  double spacing = 0.05;
};

struct ExperimentConfig {
  std::string name = "experiment";
  int d = 3;
  nlohmann::json drift;
  CertificateBlock certificate;
  MollifyBlock mollify;
  int grid_n = 64;
  double grid_L = 4.0;
  Boundary boundary = Boundary::periodic;
  SolverBlock solver;
  InitialBlock initial;
  WeightParams weight;
  McBlock mc;
  std::optional<ProbeConfig> probe;
  std::vector<std::string> checks;
  double tolerance = 0.02;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string output = "out";
  std::string base_dir = ".";  // directory of the config file, for relative drift files

  BoxGrid grid() const { return BoxGrid(d, grid_L, grid_n, boundary); }
  bool wants(const std::string& check) const;

  /// Fully expanded config with every default filled in; keys sorted.
  nlohmann::json canonical() const;
  /// SHA-256 of canonical().dump().
  std::string hash() const;
};

ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

/// Check tags understood by the runner.
const std::vector<std::string>& known_checks();

}  // namespace fbl
