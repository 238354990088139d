// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "fbl/config.hpp"
#include "fbl/drift.hpp"
#include "fbl/flowsim.hpp"
#include "fbl/moments.hpp"
#include "fbl/regularize.hpp"
#include "fbl/runner.hpp"
#include "fbl/weights.hpp"

using namespace fbl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const double kSigma = std::sqrt(2.0);

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ScalarField gaussian(const BoxGrid& g, double amp = 1.0, double width = 0.5, double cx = 0.3) {
  ScalarField f(g);
  std::vector<double> x(static_cast<std::size_t>(g.dim()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.point(i, x);
    double r2 = (x[0] - cx) * (x[0] - cx);
    for (int a = 1; a < g.dim(); ++a) r2 += x[a] * x[a];
    f[i] = amp * std::exp(-r2 / (2 * width * width));
  }
  return f;
}

// Hardy beta with sqrt(delta) = 2 beta / (d - 2) in d = 3
double beta_for_delta(double delta) { return std::sqrt(delta) / 2.0; }

SolverConfig solver(double T, double mu) {
  SolverConfig c;
  c.sigma = kSigma;
  c.T = T;
  c.mu = mu;
  return c;
}

struct E1Run {
  CheckReport report;
  double interior = 0.0;  // sup_{t > 0} ||v(t)||_2 / ||f||_4^2
};

E1Run run_e1(int n, double delta, double gamma) {
  BoxGrid g(3, 4.0, n);
  auto md = mollify(make_hardy_drift(3, beta_for_delta(delta), 1), delta, 2, gamma, g);
  auto th = thresholds(3, 1, 2.0, md.delta_m, md.certificate().c_delta, kSigma);
  const auto f = gaussian(g);
  E1Check check(f, 2.0, th, th.mu_E1);
  double interior = 0.0;
  const double bound = lp_norm(f, 4.0) * lp_norm(f, 4.0);
  solve_second_moment(md.field, f, solver(0.2, th.mu_E1), [&](int step, double t, const ScalarField& v) {
    check.observe(t, v);
    if (step > 0) interior = std::max(interior, lp_norm(v, 2.0) / bound);
  });
  return {check.report(), interior};
}

Verdict criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r64 = run_e1(64, 0.04, 0.01);
  const double secs = seconds_since(t0);
  const auto r128 = run_e1(128, 0.04, 0.01);
  const bool trend = r128.report.margin <= std::max(r64.report.margin, 0.0) + 1e-12;
  Verdict v;
  v.pass = r64.report.pass && secs <= 120.0 && trend;
  v.detail = "E1 at 64^3: lhs/bound-1=" + fmt("%.3e", r64.report.margin) + " (t>0 ratio " +
             fmt("%.4f", r64.interior) + ", " + fmt("%.1f", secs) + " s); 128^3: " +
             fmt("%.3e", r128.report.margin) + " (t>0 ratio " + fmt("%.4f", r128.interior) + ")";
  return v;
}

Verdict criterion2() {
  BoxGrid g(3, 4.0, 64);
  const double delta = 0.002;
  auto seq = build_mollified_sequence(make_hardy_drift(3, beta_for_delta(delta), 1), delta,
                                      std::vector<double>{0.0036, 0.0009}, g);
  const auto& md = seq.back();
  auto th = thresholds(3, 1, 2.0, md.delta_m, md.certificate().c_delta, kSigma);
  if (!th.gradient_ok) return {false, "gradient gate closed: sqrt(delta_m)=" + fmt("%.4f", std::sqrt(md.delta_m))};
  auto run = [&](double amp) {
    GradientCheck c(gradient_outer(gaussian(g, amp)), th, th.c_hat);
    solve_gradient_moment_system_q1(md.field, gaussian(g, amp), solver(0.2, th.c_hat),
                                    [&](int, double t, const MatrixField& V) { c.observe(t, V); });
    return c.report();
  };
  const auto r1 = run(1.0), r2 = run(2.0);
  const double defect = std::abs(r2.lhs / r2.bound - r1.lhs / r1.bound);
  const double scale = r2.bound / r1.bound;
  Verdict v;
  v.pass = r1.pass && r2.pass && defect <= 1e-10 && std::abs(scale - 16.0) <= 1e-10 * 16.0;
  v.detail = "gradL2 at delta_m=" + fmt("%.5f", md.delta_m) + ", mu=c_hat=" + fmt("%.4f", th.c_hat) +
             ": lhs/bound-1=" + fmt("%.3e", r1.margin) + "; f->2f bound x" + fmt("%.12g", scale) +
             ", ratio defect " + fmt("%.1e", defect);
  return v;
}

Verdict criterion3() {
  BoxGrid g(3, 4.0, 64);
  const double delta = 0.01 * std::pow(kSigma, 4) / 36.0;
  auto seq = build_mollified_sequence(make_hardy_drift(3, beta_for_delta(delta), 1), delta,
                                      std::vector<double>{0.0036, 0.0009}, g);
  const auto& md = seq.back();
  auto th = thresholds(3, 1, 2.0, md.delta_m, md.certificate().c_delta, kSigma);
  WeightParams wp;
  wp.kappa = 1e-4;
  wp.theta = 2.0;
  const double bracket = dual_bracket(kSigma, md.delta_m, wp.kappa, wp.theta);
  const auto v0 = gaussian(g);
  DualCheck c(v0, wp, th, th.mu_dual);
  solve_dual_continuity_moment(md.field, v0, solver(0.2, th.mu_dual),
                               [&](int, double t, const ScalarField& w) { c.observe(t, w); });
  const auto r = c.report();
  Verdict v;
  v.pass = r.pass && th.dual_ok && bracket > 0.0;
  v.detail = "dual at delta_m=" + fmt("%.5f", md.delta_m) + ", mu=" + fmt("%.4f", th.mu_dual) +
             ": lhs/bound-1=" + fmt("%.3e", r.margin) + ", bracket=" + fmt("%.4f", bracket);
  return v;
}

Verdict criterion4(const fs::path& work) {
  json j = json::parse(R"({
    "name": "acceptance-xval",
    "d": 3,
    "drift": {"kind": "hardy", "beta": 0.022360679774997897, "sign": 1},
    "mollify": {"schedule": [0.0036, 0.0009], "member": 2, "lambda": 1.0},
    "grid": {"L": 4.0, "n": 64},
    "solver": {"sigma": 1.4142135623730951, "mu": "auto", "T": 0.2, "p": 2, "q": 1},
    "initial": {"amplitude": 1.0, "width": 0.5, "center": [0.3, 0.0, 0.0]},
    "mc": {"realizations": 200, "dt": 0.001,
           "probes": [[0.3, 0, 0], [0, 0, 0], [0.6, 0.2, 0], [0.1, -0.3, 0.2], [-0.2, 0.1, 0.1]]},
    "checks": ["mc_pde_xval"],
    "seed": 1
  })");
  j["output"] = (work / "xval").string();
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = run_experiment(parse_config(j));
  const double secs = seconds_since(t0);
  if (!out.error.empty()) return {false, out.error};
  const auto& r = out.checks.at(0);
  Verdict v;
  v.pass = r.pass && secs <= 600.0;
  v.detail = "5 probes x {v, grad trace}, 200 realizations, dt=1e-3: worst |MC-PDE|/allowance=" +
             fmt("%.3f", r.lhs) + " (" + fmt("%.0f", secs) + " s)";
  return v;
}

Verdict criterion5() {
  Verdict v{true, ""};
  for (auto [kappa, theta] : {std::pair{1e-4, 2.0}, std::pair{0.04, 2.0}, std::pair{1.0, 3.0}}) {
    WeightParams w;
    w.kappa = kappa;
    w.theta = theta;
    const auto r = grad_rho_ratio_bound(w, 1000000);
    const bool ok = std::abs(r.scan_max - r.bound) <= 1e-10 && r.never_exceeds && r.attained &&
                    std::abs(r.scan_argmax - r.maximizer_radius) <= 1e-5 * r.maximizer_radius;
    v.pass = v.pass && ok;
    v.detail += fmt("(kappa=%g", kappa) + fmt(", theta=%g)", theta) + ": |scan max - theta sqrt(kappa)|=" +
                fmt("%.1e", std::abs(r.scan_max - r.bound)) + " at r=" + fmt("%.4f", r.scan_argmax) + "; ";
  }
  return v;
}

Verdict criterion6() {
  Verdict v{true, ""};
  BoxGrid g(3, 2.0, 128);
  for (double beta : {0.2, 0.4}) {
    const auto w = weak_ld_norm(make_hardy_drift(3, beta, 1), g);
    const double st = strichartz_certificate(3, w.value).delta, hd = hardy_certificate(3, beta).delta;
    const double rel = std::abs(std::sqrt(st) - std::sqrt(hd)) / std::sqrt(hd);
    v.pass = v.pass && w.stable && rel <= 0.05;
    v.detail += fmt("beta=%g: ", beta) + "sqrt(delta) rel diff " + fmt("%.4f", rel) + "; ";
  }
  const auto b = make_hardy_drift(3, 0.5, 1);
  const double delta = hardy_certificate(3, 0.5).delta;
  double prev = 0.0;
  v.detail += "numeric/delta at n=16,32,48,64:";
  for (int n : {16, 32, 48, 64}) {
    const auto e = estimate_form_bound_numeric(b, 1.0, BoxGrid(3, 2.0, n));
    v.pass = v.pass && e.converged && e.delta_est <= 1.1 * delta && e.delta_est > prev;
    prev = e.delta_est;
    v.detail += " " + fmt("%.4f", e.delta_est / delta);
  }
  return v;
}

Verdict criterion7() {
  BoxGrid g(3, 5.0, 128);
  const auto b = make_hardy_drift(3, 0.5, 1);
  const double delta = hardy_certificate(3, 0.5).delta;
  std::vector<double> schedule;
  for (int m = 1; m <= 4; ++m) schedule.push_back(std::pow(4.0, -m));
  const auto seq = build_mollified_sequence(b, delta, schedule, g);
  Verdict v{true, "L2(B_1):"};
  double prev = INFINITY;
  std::string ratios = "; numeric/delta_m:";
  for (const auto& md : seq) {
    const auto e = estimate_form_bound_numeric(md.field, 1.0, g);
    v.pass = v.pass && md.l2_distance < prev && e.delta_est <= 1.1 * md.delta_m;
    prev = md.l2_distance;
    v.detail += " " + fmt("%.4f", md.l2_distance);
    ratios += " " + fmt("%.4f", e.delta_est / md.delta_m);
  }
  v.detail += ratios;
  return v;
}

Verdict criterion8() {
  ProbeConfig c;
  c.betas = {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0};
  c.x0 = {0.5, 0.0, 0.0};
  c.eps_ball = 1e-3;
  c.T = 5.0;
  c.n_paths = 10000;
  c.seed = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = criticality_probe(c);
  const double secs = seconds_since(t0);
  bool monotone = true;
  for (std::size_t k = 1; k < rows.size(); ++k)
    if (rows[k].hit_fraction < rows[k - 1].hit_fraction - 2 * std::hypot(rows[k].stderr_, rows[k - 1].stderr_))
      monotone = false;
  const double lo = crossing_beta(rows, 0.1), hi = crossing_beta(rows, 0.9);
  const double half = 0.5 * (hi - lo);
  const bool contains = lo <= 1.0 && 1.0 <= hi;
  Verdict v;
  v.pass = monotone && contains && half <= 0.3 && secs <= 900.0;
  v.detail = std::string(monotone ? "monotone" : "NOT monotone") + ", 10%-90% bracket [" + fmt("%.3f", lo) + ", " +
             fmt("%.3f", hi) + "] half-width " + fmt("%.3f", half) + (contains ? " contains 1" : " misses 1") +
             " (" + fmt("%.0f", secs) + " s); fractions:";
  for (const auto& r : rows) v.detail += " " + fmt("%.3f", r.hit_fraction);
  return v;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(FBL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict criterion9(const fs::path& work) {
  // every stage and check, at reduced sizes
  json j = json::parse(R"({
    "name": "acceptance-repro",
    "d": 3,
    "drift": {"kind": "hardy", "beta": 0.022360679774997897, "sign": 1},
    "mollify": {"schedule": [0.0036, 0.0009], "member": 2, "lambda": 1.0},
    "grid": {"L": 4.0, "n": 32},
    "solver": {"sigma": 1.4142135623730951, "mu": "auto", "T": 0.1, "p": 2, "q": 1},
    "initial": {"amplitude": 1.0, "width": 0.5, "center": [0.3, 0.0, 0.0]},
    "mc": {"realizations": 40, "dt": 0.005},
    "probe": {"betas": [0.5, 1.0, 2.0], "T": 0.5, "n_paths": 200},
    "checks": ["certificate", "mollifier", "E1", "gradL2", "dual", "two_est", "mc_pde_xval", "criticality"],
    "seed": 11
  })");
  const auto cfg = work / "repro.json";
  std::ofstream(cfg) << j.dump(2);
  const auto a = work / "repro_t1", b = work / "repro_t4";
  const int ra = cli("run --config " + cfg.string() + " --threads 1 --out " + a.string());
  const int rb = cli("run --config " + cfg.string() + " --threads 4 --out " + b.string());
  if (ra == 2 || rb == 2) return {false, "pipeline stage failed"};
  int n = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    ++n;
    if (slurp(e.path()) != slurp(b / fs::relative(e.path(), a))) ++differ;
  }
  Verdict v;
  v.pass = n >= 8 && differ == 0 && ra == rb;
  v.detail = std::to_string(n) + " CSVs from threads=1 vs threads=4, " + std::to_string(differ) +
             " differ (exit codes " + std::to_string(ra) + ", " + std::to_string(rb) + ")";
  return v;
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "fbl_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"constant-1 moment bound (E1)", criterion1},
      {"gradient-moment bound (q=1)", criterion2},
      {"dual weighted bound", criterion3},
      {"MC vs PDE cross-validation", [&] { return criterion4(work); }},
      {"weight inequality", criterion5},
      {"certificate consistency", criterion6},
      {"mollifier contract", criterion7},
      {"criticality bracket", criterion8},
      {"reproducibility", [&] { return criterion9(work); }},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s criterion %zu (%s): %s\n", v.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
