#include "fbl/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "fbl/hash.hpp"

namespace fbl {
namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& block) {
  if (!j.is_object()) throw std::invalid_argument("config: \"" + block + "\" must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw std::invalid_argument("config: unknown key \"" + it.key() + "\" in " + block);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::vector<double> read_point(const json& j, int d, const std::string& what) {
  auto v = j.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != d)
    throw std::invalid_argument("config: " + what + " must have " + std::to_string(d) + " coordinates");
  return v;
}

}  // namespace

double InitialBlock::value(std::span<const double> x) const {
  double r2 = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) r2 += (x[a] - center[a]) * (x[a] - center[a]);
  return amplitude * std::exp(-r2 / (2.0 * width * width));
}

void InitialBlock::gradient(std::span<const double> x, std::span<double> out) const {
  const double v = value(x);
  for (std::size_t a = 0; a < x.size(); ++a) out[a] = -(x[a] - center[a]) / (width * width) * v;
}

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> k{"certificate", "mollifier", "E1",          "gradL2",
                                          "dual",        "two_est",   "mc_pde_xval", "criticality"};
  return k;
}

bool ExperimentConfig::wants(const std::string& check) const {
  return std::find(checks.begin(), checks.end(), check) != checks.end();
}

ExperimentConfig parse_config(const json& j, const std::string& base_dir) {
  check_keys(j,
             {"name", "d", "drift", "certificate", "mollify", "grid", "solver", "initial", "weight", "mc", "probe",
              "checks", "tolerance", "seed", "threads", "output"},
             "config");
  ExperimentConfig c;
  c.base_dir = base_dir;
  read(j, "name", c.name);
  read(j, "d", c.d);
  if (c.d < 3) throw std::invalid_argument("config: d must be >= 3");
  c.drift = j.value("drift", json{{"kind", "zero"}});
  if (!c.drift.contains("d")) c.drift["d"] = c.d;

  if (j.contains("certificate")) {
    const auto& b = j.at("certificate");
    check_keys(b, {"method", "lambda", "delta", "c_delta"}, "certificate");
    read(b, "method", c.certificate.method);
    read(b, "lambda", c.certificate.lambda);
    if (b.contains("delta")) c.certificate.delta = b.at("delta").get<double>();
    if (b.contains("c_delta")) c.certificate.c_delta = b.at("c_delta").get<double>();
    static const std::vector<std::string> methods{"auto", "hardy_analytic", "strichartz", "numeric_estimate",
                                                  "given"};
    if (std::find(methods.begin(), methods.end(), c.certificate.method) == methods.end())
      throw std::invalid_argument("config: unknown certificate method \"" + c.certificate.method + "\"");
    if (c.certificate.method == "given" && !c.certificate.delta)
      throw std::invalid_argument("config: certificate method \"given\" needs delta");
  }

  if (j.contains("mollify")) {
    const auto& b = j.at("mollify");
    check_keys(b, {"schedule", "member", "c_sob", "lambda", "test_radius"}, "mollify");
    read(b, "schedule", c.mollify.schedule);
    read(b, "member", c.mollify.member);
    read(b, "c_sob", c.mollify.c_sob);
    read(b, "lambda", c.mollify.lambda);
    read(b, "test_radius", c.mollify.test_radius);
    const int M = static_cast<int>(c.mollify.schedule.size());
    if (c.mollify.member < 0 || c.mollify.member > M)
      throw std::invalid_argument("config: mollify.member out of range 1.." + std::to_string(M));
    if (M > 0 && c.mollify.member == 0) c.mollify.member = M;
  }

  if (j.contains("grid")) {
    const auto& b = j.at("grid");
    check_keys(b, {"L", "n", "boundary"}, "grid");
    read(b, "L", c.grid_L);
    read(b, "n", c.grid_n);
    if (b.contains("boundary")) c.boundary = boundary_from_string(b.at("boundary").get<std::string>());
  }
  if (!(c.grid_L > 0.0) || c.grid_n < 4 || c.grid_n % 2 != 0)
    throw std::invalid_argument("config: grid needs L > 0 and an even n >= 4");

  if (j.contains("solver")) {
    const auto& b = j.at("solver");
    check_keys(b, {"sigma", "mu", "dt", "T", "p", "q", "cfl_safety", "min_steps", "snapshot_stride"}, "solver");
    read(b, "sigma", c.solver.sigma);
    if (b.contains("mu")) {
      const auto& m = b.at("mu");
      if (m.is_string()) {
        if (m.get<std::string>() != "auto") throw std::invalid_argument("config: solver.mu must be a number or \"auto\"");
      } else {
        c.solver.mu = m.get<double>();
      }
    }
    read(b, "dt", c.solver.dt);
    read(b, "T", c.solver.T);
    read(b, "p", c.solver.p);
    read(b, "q", c.solver.q);
    read(b, "cfl_safety", c.solver.cfl_safety);
    read(b, "min_steps", c.solver.min_steps);
    read(b, "snapshot_stride", c.solver.snapshot_stride);
  }
  if (!(c.solver.sigma > 0.0)) throw std::invalid_argument("config: solver.sigma must be positive");
  if (!(c.solver.T > 0.0)) throw std::invalid_argument("config: solver.T must be positive");
  if (c.solver.q < 1) throw std::invalid_argument("config: solver.q must be >= 1");

  c.initial.center.assign(static_cast<std::size_t>(c.d), 0.0);
  if (j.contains("initial")) {
    const auto& b = j.at("initial");
    check_keys(b, {"amplitude", "width", "center"}, "initial");
    read(b, "amplitude", c.initial.amplitude);
    read(b, "width", c.initial.width);
    if (b.contains("center")) c.initial.center = read_point(b.at("center"), c.d, "initial.center");
  }
  if (!(c.initial.width > 0.0)) throw std::invalid_argument("config: initial.width must be positive");

  c.weight.d = c.d;
  if (j.contains("weight")) {
    const auto& b = j.at("weight");
    check_keys(b, {"kappa", "theta"}, "weight");
    read(b, "kappa", c.weight.kappa);
    read(b, "theta", c.weight.theta);
  }
  c.weight.validate();

  if (j.contains("mc")) {
    const auto& b = j.at("mc");
    check_keys(b, {"realizations", "dt", "probes", "spacing"}, "mc");
    read(b, "realizations", c.mc.realizations);
    read(b, "dt", c.mc.dt);
    read(b, "spacing", c.mc.spacing);
    if (b.contains("probes"))
      for (const auto& p : b.at("probes")) c.mc.probes.push_back(read_point(p, c.d, "mc.probes entry"));
  }
  if (c.mc.realizations < 1 || !(c.mc.dt > 0.0) || !(c.mc.spacing > 0.0))
    throw std::invalid_argument("config: mc needs realizations >= 1, dt > 0, spacing > 0");

  if (j.contains("probe")) {
    const auto& b = j.at("probe");
    check_keys(b, {"betas", "sigma", "x0", "eps_ball", "T", "dt0", "n_paths"}, "probe");
    ProbeConfig p;
    p.d = c.d;
    p.x0.assign(static_cast<std::size_t>(c.d), 0.0);
    p.x0[0] = 0.5;
    read(b, "betas", p.betas);
    read(b, "sigma", p.sigma);
    if (b.contains("x0")) p.x0 = read_point(b.at("x0"), c.d, "probe.x0");
    read(b, "eps_ball", p.eps_ball);
    read(b, "T", p.T);
    read(b, "dt0", p.dt0);
    read(b, "n_paths", p.n_paths);
    c.probe = p;
  }

  read(j, "checks", c.checks);
  for (const auto& k : c.checks)
    if (std::find(known_checks().begin(), known_checks().end(), k) == known_checks().end())
      throw std::invalid_argument("config: unknown check \"" + k + "\"");
  read(j, "tolerance", c.tolerance);
  read(j, "seed", c.seed);
  read(j, "threads", c.threads);
  read(j, "output", c.output);
  if (c.probe) c.probe->seed = c.seed;
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config: " + path + ": " + e.what());
  }
  const auto dir = std::filesystem::absolute(path).parent_path().string();
  return parse_config(j, dir);
}

json ExperimentConfig::canonical() const {
  json j;
  j["name"] = name;
  j["d"] = d;
  j["drift"] = drift;
  j["certificate"] = {{"method", certificate.method}, {"lambda", certificate.lambda}};
  if (certificate.delta) j["certificate"]["delta"] = *certificate.delta;
  if (certificate.c_delta) j["certificate"]["c_delta"] = *certificate.c_delta;
  j["mollify"] = {{"schedule", mollify.schedule},
                  {"member", mollify.member},
                  {"c_sob", mollify.c_sob},
                  {"lambda", mollify.lambda},
                  {"test_radius", mollify.test_radius}};
  j["grid"] = {{"L", grid_L}, {"n", grid_n}, {"boundary", to_string(boundary)}};
  j["solver"] = {{"sigma", solver.sigma},
                 {"mu", solver.mu ? json(*solver.mu) : json("auto")},
                 {"dt", solver.dt},
                 {"T", solver.T},
                 {"p", solver.p},
                 {"q", solver.q},
                 {"cfl_safety", solver.cfl_safety},
                 {"min_steps", solver.min_steps},
                 {"snapshot_stride", solver.snapshot_stride}};
  j["initial"] = {{"amplitude", initial.amplitude}, {"width", initial.width}, {"center", initial.center}};
  j["weight"] = {{"kappa", weight.kappa}, {"theta", weight.theta}};
  j["mc"] = {{"realizations", mc.realizations}, {"dt", mc.dt}, {"probes", mc.probes}, {"spacing", mc.spacing}};
  if (probe) {
    auto p = probe->to_json();
    p.erase("seed");
    p.erase("d");
    j["probe"] = p;
  }
  j["checks"] = checks;
  j["tolerance"] = tolerance;
  j["seed"] = seed;
  // threads and output are left out: results do not depend on them
  return j;
}

std::string ExperimentConfig::hash() const { return sha256_hex(canonical().dump()); }

}  // namespace fbl
