#include "fbl/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fbl/drift.hpp"
#include "fbl/flowsim.hpp"
#include "fbl/gridio.hpp"
#include "fbl/hash.hpp"
#include "fbl/regularize.hpp"
#include "fbl/thresholds.hpp"
#include "fbl/weights.hpp"

namespace fbl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::certify: return "certify";
    case Stage::mollify: return "mollify";
    case Stage::moments: return "moments";
    case Stage::flow: return "flow";
    case Stage::xval: return "xval";
    case Stage::probe: return "probe";
  }
  return "?";
}

std::vector<Stage> stages_for(const std::string& sub) {
  if (sub == "run")
    return {Stage::certify, Stage::mollify, Stage::moments, Stage::flow, Stage::xval, Stage::probe};
  if (sub == "certify") return {Stage::certify};
  if (sub == "mollify") return {Stage::certify, Stage::mollify};
  if (sub == "moments") return {Stage::certify, Stage::mollify, Stage::moments};
  if (sub == "flow") return {Stage::certify, Stage::mollify, Stage::flow};
  if (sub == "xval") return {Stage::certify, Stage::mollify, Stage::xval};
  if (sub == "probe") return {Stage::probe};
  throw std::invalid_argument("unknown subcommand \"" + sub + "\"");
}

namespace {

class StageError : public std::runtime_error {
public:
  StageError(Stage s, const std::string& what) : std::runtime_error(to_string(s) + ": " + what) {}
};

// CSV with the provenance header comment; rows are written in index order.
class Csv {
public:
  Csv(const fs::path& path, const std::string& hash, std::uint64_t seed, const std::string& columns)
      : os_(path, std::ios::binary) {
    if (!os_) throw std::runtime_error("cannot write " + path.string());
    os_ << "# config_hash=" << hash << " seed=" << seed << "\n" << columns << "\n";
  }
  Csv& cell(double v) { return put(format_double(v)); }
  Csv& cell(long v) { return put(std::to_string(v)); }
  Csv& cell(int v) { return put(std::to_string(v)); }
  Csv& cell(const std::string& s) { return put(s); }
  void end() {
    os_ << "\n";
    first_ = true;
  }

private:
  Csv& put(const std::string& s) {
    if (!first_) os_ << ",";
    os_ << s;
    first_ = false;
    return *this;
  }
  std::ofstream os_;
  bool first_ = true;
};

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << s;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Rows of a provenance CSV: skips the comment and the column line.
std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
  std::istringstream in(read_text(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string check_line(const CheckReport& r) {
  std::ostringstream os;
  os << (r.refused ? "REFUSED" : (r.pass ? "PASS" : "FAIL")) << "  " << r.tag << "  " << r.name;
  if (!r.refused)
    os << "\n    lhs=" << format_double(r.lhs) << " bound=" << format_double(r.bound)
       << " constant=" << format_double(r.constant) << " tol=" << format_double(r.tolerance)
       << " margin=" << format_double(r.margin);
  if (!r.gate.empty()) os << "\n    gate: " << r.gate;
  return os.str();
}

CheckReport make_report(const std::string& name, const std::string& tag, double lhs, double bound, double tol,
                        bool pass, const std::string& note, json details) {
  CheckReport r;
  r.name = name;
  r.tag = tag;
  r.lhs = lhs;
  r.bound = bound;
  r.tolerance = tol;
  r.margin = bound > 0.0 ? lhs / bound - 1.0 : (lhs > 0.0 ? INFINITY : 0.0);
  r.pass = pass;
  if (!pass) r.gate = note;
  r.details = std::move(details);
  return r;
}

// --- individual check evaluations shared by run and verify -------------------

struct XvalRow {
  int probe = 0;
  std::string quantity;
  double pde = 0.0, mc = 0.0, stderr_ = 0.0;
};

double xval_allowance(const XvalRow& r) { return std::max(3.0 * r.stderr_, 0.05 * std::abs(r.pde)); }

CheckReport evaluate_xval(const std::vector<XvalRow>& rows) {
  double worst = 0.0;  // max |mc - pde| / allowance
  int worst_probe = -1;
  std::string worst_q;
  bool pass = !rows.empty();
  for (const auto& r : rows) {
    const double a = xval_allowance(r);
    const double ratio = a > 0.0 ? std::abs(r.mc - r.pde) / a : (r.mc == r.pde ? 0.0 : INFINITY);
    if (!(ratio <= 1.0)) pass = false;
    if (ratio > worst || worst_probe < 0) {
      worst = ratio;
      worst_probe = r.probe;
      worst_q = r.quantity;
    }
  }
  json det = {{"rows", rows.size()}, {"worst_probe", worst_probe}, {"worst_quantity", worst_q}};
  char note[160];
  std::snprintf(note, sizeof note, "probe %d (%s): |MC - PDE| is %.4g x max(3 stderr, 5%%)", worst_probe,
                worst_q.c_str(), worst);
  return make_report("mc_pde_xval: |MC - PDE| <= max(3 stderr, 5%) at every probe", "mc_pde_xval", worst, 1.0, 0.0,
                     pass, rows.empty() ? "no probe rows" : note, det);
}

CheckReport evaluate_criticality(const std::vector<ProbeRow>& rows, int d) {
  bool monotone = true;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double se = std::hypot(rows[i].stderr_, rows[i - 1].stderr_);
    if (rows[i].hit_fraction < rows[i - 1].hit_fraction - 2.0 * std::max(se, 1e-300)) monotone = false;
  }
  const double b10 = crossing_beta(rows, 0.1), b90 = crossing_beta(rows, 0.9);
  const double crit = d - 2.0;
  const bool bracketed = std::isfinite(b10) && std::isfinite(b90) && b10 <= crit && crit <= b90;
  const double half = (std::isfinite(b10) && std::isfinite(b90)) ? 0.5 * (b90 - b10) : INFINITY;
  const bool pass = monotone && bracketed && half <= 0.3;
  json det = {{"monotone", monotone},
              {"beta_10", std::isfinite(b10) ? json(b10) : json(nullptr)},
              {"beta_90", std::isfinite(b90) ? json(b90) : json(nullptr)},
              {"critical_beta", crit},
              {"bracket_contains_critical", bracketed}};
  std::string note;
  if (!monotone) note += "hit fraction not monotone within 2 stderr; ";
  if (!bracketed) note += "10%-90% bracket does not contain beta = d-2; ";
  if (!(half <= 0.3)) note += "bracket half-width " + format_double(half) + " > 0.3";
  return make_report("criticality: monotone hit fraction, 10%-90% bracket contains d-2, half-width <= 0.3",
                     "criticality", half, 0.3, 0.0, pass, note, det);
}

CheckReport evaluate_two_est(const WeightParams& w) {
  const auto g = grad_rho_ratio_bound(w);
  const bool pass = g.never_exceeds && g.attained;
  return make_report("two_est: max |grad rho|/rho = theta sqrt(kappa), attained at |x| = 1/sqrt(kappa)", "two_est",
                     g.scan_max, g.bound, 1e-10, pass, "scan exceeds the bound or the maximum is not attained",
                     g.to_json());
}

CheckReport evaluate_certificate(const json& det) {
  const double delta = det.at("delta").get<double>();
  const double numeric = det.at("numeric_delta").get<double>();
  bool pass = numeric <= 1.1 * delta + 1e-15;
  std::string note;
  if (!pass) note = "numeric form bound exceeds delta by more than 10%";
  double lhs = numeric;
  if (det.contains("strichartz_delta")) {
    const double s = det.at("strichartz_delta").get<double>();
    const double rel = delta > 0.0 ? std::abs(std::sqrt(s / delta) - 1.0) : std::sqrt(s);
    if (!(rel <= 0.05)) {
      pass = false;
      note += (note.empty() ? "" : "; ") + std::string("Strichartz sqrt(delta) differs by ") + format_double(rel);
    }
  }
  return make_report("certificate: numeric <= 1.1 delta, Strichartz vs analytic within 5%", "certificate", lhs,
                     delta, 0.1, pass, note, det);
}

CheckReport evaluate_mollifier(const json& members) {
  bool decreasing = true, bounded = true;
  double worst = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto& m = members[i];
    if (i > 0 && !(m.at("l2_distance").get<double>() < members[i - 1].at("l2_distance").get<double>()))
      decreasing = false;
    const double ratio = m.at("numeric_delta").get<double>() / m.at("delta_m").get<double>();
    worst = std::max(worst, ratio);
    if (!(ratio <= 1.1)) bounded = false;
  }
  std::string note;
  if (!decreasing) note += "L2(B_R) distance not strictly decreasing; ";
  if (!bounded) note += "numeric form bound exceeds delta_m by more than 10%";
  return make_report("mollifier: ||b_m - b|| strictly decreasing, numeric delta_m within 10%", "mollifier", worst, 1.0,
                     0.1, decreasing && bounded && !members.empty(), note, json{{"members", members.size()}});
}

ScalarField sample_initial(const ExperimentConfig& cfg, const BoxGrid& g) {
  ScalarField f(g);
  std::vector<double> x(static_cast<std::size_t>(g.dim()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.point(i, x);
    f[i] = cfg.initial.value(x);
  }
  return f;
}

std::vector<std::vector<double>> probe_points(const ExperimentConfig& cfg) {
  if (!cfg.mc.probes.empty()) return cfg.mc.probes;
  std::vector<std::vector<double>> p(5, cfg.initial.center);
  p[1][0] += 0.3;
  p[2][0] -= 0.3;
  p[3][1] += 0.3;
  p[4][1] -= 0.3;
  return p;
}

FormBoundCertificate certify_drift(const ExperimentConfig& cfg, const DriftField& b, const BoxGrid& g,
                                   json& details) {
  std::string method = cfg.certificate.method;
  const auto kind = b.kind();
  if (method == "auto") {
    if (cfg.certificate.delta) method = "given";
    else if (kind == DriftKind::hardy) method = "hardy_analytic";
    else if (kind == DriftKind::zero) method = "given";
    else method = "strichartz";
  }
  FormBoundCertificate c;
  if (method == "hardy_analytic") {
    if (kind != DriftKind::hardy) throw std::invalid_argument("hardy_analytic certificate needs a hardy drift");
    c = certificate_scaled(hardy_certificate(b.dimension(), b.hardy().beta), std::abs(b.scale()));
  } else if (method == "strichartz") {
    const auto w = weak_ld_norm(b, g);
    details["weak_ld_norm"] = w.value;
    details["weak_ld_stable"] = w.stable;
    c = strichartz_certificate(b.dimension(), w.value);
  } else if (method == "numeric_estimate") {
    const auto e = estimate_form_bound_numeric(b, cfg.certificate.lambda, g);
    c.delta = e.delta_est;
    c.lambda = cfg.certificate.lambda;
    c.c_delta = c.lambda * c.delta;
    c.method = CertMethod::numeric_estimate;
    c.provenance = "power iteration on the periodic grid";
  } else {  // given
    c.delta = cfg.certificate.delta.value_or(0.0);
    c.c_delta = cfg.certificate.c_delta.value_or(cfg.certificate.lambda * c.delta);
    c.lambda = c.delta > 0.0 ? c.c_delta / c.delta : cfg.certificate.lambda;
    c.method = CertMethod::numeric_estimate;
    c.provenance = "given in config";
  }
  details["method"] = method;
  return c;
}

struct Context {
  const ExperimentConfig& cfg;
  fs::path out;
  std::string hash;
  BoxGrid grid;
  DriftField drift;
  FormBoundCertificate cert;
  double solver_delta = 0.0, solver_c_delta = 0.0;
  ThresholdSet th;
  std::vector<MollifiedDrift> members;
  DriftField solver_drift;
  json certificate_json;
  std::map<std::string, double> timings;

  Context(const ExperimentConfig& c, const fs::path& o) : cfg(c), out(o), hash(c.hash()) {}

  double mu_for(double threshold) const { return cfg.solver.mu ? *cfg.solver.mu : threshold; }
  SolverConfig solver(double mu) const {
    SolverConfig s;
    s.sigma = cfg.solver.sigma;
    s.mu = mu;
    s.dt = cfg.solver.dt;
    s.T = cfg.solver.T;
    s.cfl_safety = cfg.solver.cfl_safety;
    s.min_steps = cfg.solver.min_steps;
    s.snapshot_stride = cfg.solver.snapshot_stride;
    return s;
  }
  Csv csv(const std::string& name, const std::string& columns) const { return Csv(out / name, hash, cfg.seed, columns); }
};

void stage_certify(Context& cx, std::vector<CheckReport>& reports) {
  json det;
  cx.cert = certify_drift(cx.cfg, cx.drift, cx.grid, det);
  cx.certificate_json = cx.cert.to_json();
  cx.certificate_json["details"] = det;
  if (cx.cfg.wants("certificate")) {
    json cd = {{"delta", cx.cert.delta}};
    if (cx.drift.kind() == DriftKind::hardy) {
      const auto w = weak_ld_norm(cx.drift, cx.grid);
      cd["strichartz_delta"] = strichartz_certificate(cx.cfg.d, w.value).delta;
      cd["weak_ld_norm"] = w.value;
    }
    const auto e = estimate_form_bound_numeric(cx.drift, cx.cfg.certificate.lambda, cx.grid);
    cd["numeric_delta"] = e.delta_est;
    cd["numeric_converged"] = e.converged;
    cd["numeric_iterations"] = e.iterations;
    cd["lambda"] = cx.cfg.certificate.lambda;
    cx.certificate_json["cross_check"] = cd;
    reports.push_back(evaluate_certificate(cd));
  }
  std::ofstream(cx.out / "certificate.json") << cx.certificate_json.dump(2) << "\n";
}

void stage_mollify(Context& cx, std::vector<CheckReport>& reports) {
  const auto& mb = cx.cfg.mollify;
  if (mb.schedule.empty()) return;
  MollifyOptions opt;
  opt.c_sob = mb.c_sob;
  opt.lambda = mb.lambda;
  opt.test_radius = mb.test_radius;
  cx.members = build_mollified_sequence(cx.drift, cx.cert.delta, mb.schedule, cx.grid, opt);
  fs::create_directories(cx.out / "mollified");
  auto csv = cx.csv("mollify.csv", "m,gamma,epsilon,delta_m,c_delta_m,ld_defect,ld_threshold,l2_distance,numeric_delta");
  json members = json::array();
  for (const auto& m : cx.members) {
    write_mollified_drift((cx.out / "mollified" / ("b_m" + std::to_string(m.m) + ".fblg")).string(), m);
    double numeric = NAN;
    if (cx.cfg.wants("mollifier")) {
      numeric = estimate_form_bound_numeric(m.field, 1.0, cx.grid).delta_est;
      auto mm = m.meta();
      mm["numeric_delta"] = numeric;
      members.push_back(mm);
    }
    csv.cell(m.m).cell(m.gamma).cell(m.epsilon).cell(m.delta_m).cell(m.certificate().c_delta).cell(m.ld_defect)
        .cell(m.ld_threshold).cell(m.l2_distance).cell(numeric);
    csv.end();
  }
  if (cx.cfg.wants("mollifier")) {
    auto r = evaluate_mollifier(members);
    r.details["table"] = members;
    reports.push_back(r);
  }
  const auto& md = cx.members[static_cast<std::size_t>(mb.member - 1)];
  cx.solver_drift = md.field;
}

void stage_moments(Context& cx, std::vector<CheckReport>& reports, const std::map<std::string, GateError>& refused) {
  const auto& cfg = cx.cfg;
  const ScalarField f = sample_initial(cfg, cx.grid);
  const double tol = cfg.tolerance;
  auto refused_here = [&](const std::string& tag) { return refused.count(tag) > 0; };

  if (cfg.wants("E1") && !refused_here("E1")) {
    const double mu = cx.mu_for(cx.th.mu_E1);
    E1Check chk(f, cfg.solver.p, cx.th, mu, tol);
    auto csv = cx.csv("moments_E1.csv", "step,t,norm_p,max_v");
    const double p = cfg.solver.p;
    auto series = solve_second_moment(cx.solver_drift, f, cx.solver(mu), [&](int step, double t, const ScalarField& v) {
      chk.observe(t, v);
      csv.cell(step).cell(t).cell(lp_norm(v, p)).cell(*std::max_element(v.data.begin(), v.data.end()));
      csv.end();
    });
    write_grid_file((cx.out / "v_final.fblg").string(), series.final(), json{{"t", cfg.solver.T}});
    auto r = chk.report();
    r.details["solver"] = series.stats.to_json();
    reports.push_back(r);
  }
  if (cfg.wants("gradL2") && !refused_here("gradL2")) {
    const double mu = cx.mu_for(cx.th.c_hat);
    const MatrixField V0 = gradient_outer(f);
    GradientCheck chk(V0, cx.th, mu, tol);
    auto csv = cx.csv("moments_gradL2.csv", "step,t,energy");
    auto series = solve_gradient_moment_system_q1(cx.solver_drift, V0, cx.solver(mu),
                                                  [&](int step, double t, const MatrixField& V) {
                                                    chk.observe(t, V);
                                                    csv.cell(step).cell(t).cell(gradient_energy(V));
                                                    csv.end();
                                                  });
    write_grid_file((cx.out / "V_final.fblg").string(), series.final().grid, series.final().comp,
                    json{{"t", cfg.solver.T}, {"layout", "upper triangle, row-major pairs (i <= j)"}});
    // homogeneity: f -> 2f scales every V by 4, the ratio sup/initial is unchanged
    ScalarField f2 = f;
    for (double& v : f2.data) v *= 2.0;
    const MatrixField V02 = gradient_outer(f2);
    GradientCheck chk2(V02, cx.th, mu, tol);
    solve_gradient_moment_system_q1(cx.solver_drift, V02, cx.solver(mu),
                                    [&](int, double t, const MatrixField& V) { chk2.observe(t, V); });
    auto r = chk.report();
    const auto r2 = chk2.report();
    const double ratio1 = r.lhs / r.bound, ratio2 = r2.lhs / r2.bound;
    const double hom = std::abs(ratio2 / ratio1 - 1.0);
    r.details["homogeneity_ratio_defect"] = hom;
    r.details["solver"] = series.stats.to_json();
    if (!(hom <= 1e-10)) {
      r.pass = false;
      r.gate += (r.gate.empty() ? "" : "; ") + std::string("homogeneity defect ") + format_double(hom) + " > 1e-10";
    }
    reports.push_back(r);
  }
  if (cfg.wants("dual") && !refused_here("dual")) {
    const double mu = cx.mu_for(cx.th.mu_dual);
    ScalarField v0(cx.grid);
    for (std::size_t i = 0; i < f.size(); ++i) v0[i] = f[i] * f[i];
    WeightParams wp = cfg.weight;
    DualCheck chk(v0, wp, cx.th, mu, tol);
    const auto rs = rho_samples(wp, cx.grid);
    auto csv = cx.csv("moments_dual.csv", "step,t,weighted_norm");
    auto series =
        solve_dual_continuity_moment(cx.solver_drift, v0, cx.solver(mu), [&](int step, double t, const ScalarField& w) {
          chk.observe(t, w);
          double s = 0.0;
          for (std::size_t i = 0; i < w.size(); ++i) s += (w[i] / rs[i]) * (w[i] / rs[i]);
          csv.cell(step).cell(t).cell(std::sqrt(s * cx.grid.cell_volume()));
          csv.end();
        });
    write_grid_file((cx.out / "w_final.fblg").string(), series.final(), json{{"t", cfg.solver.T}});
    auto r = chk.report();
    r.details["solver"] = series.stats.to_json();
    reports.push_back(r);
  }
  if (cfg.wants("two_est")) {
    auto r = evaluate_two_est(cfg.weight);
    auto csv = cx.csv("two_est.csv", "bound,maximizer_radius,ratio_at_maximizer,scan_max,scan_argmax,scan_points");
    const auto& d = r.details;
    csv.cell(d.at("bound").get<double>()).cell(d.at("maximizer_radius").get<double>())
        .cell(d.at("ratio_at_maximizer").get<double>()).cell(d.at("scan_max").get<double>())
        .cell(d.at("scan_argmax").get<double>()).cell(d.at("scan_points").get<long>());
    csv.end();
    reports.push_back(r);
  }
}

PathConfig path_config(const Context& cx, double mu) {
  PathConfig pc;
  pc.sigma = cx.cfg.solver.sigma;
  pc.mu = mu;
  pc.dt = cx.cfg.mc.dt;
  pc.T = cx.cfg.solver.T;
  pc.seed = cx.cfg.seed;
  pc.r_cap = cx.grid.spacing();
  return pc;
}

void stage_flow(Context& cx) {
  const auto pts = probe_points(cx.cfg);
  std::vector<double> starts;
  for (const auto& p : pts) starts.insert(starts.end(), p.begin(), p.end());
  PathConfig pc = path_config(cx, 0.0);
  pc.n_snapshots = 10;
  const auto ens = simulate_flow(cx.solver_drift, starts, pc, cx.cfg.mc.realizations);
  const int d = cx.cfg.d;
  std::string cols = "realization,start,t";
  for (int a = 0; a < d; ++a) cols += ",x" + std::to_string(a);
  if (ens.has_jacobian)
    for (int a = 0; a < d; ++a)
      for (int k = 0; k < d; ++k) cols += ",J" + std::to_string(a) + std::to_string(k);
  auto csv = cx.csv("flow_snapshots.csv", cols);
  for (int r = 0; r < ens.n_realizations; ++r)
    for (std::size_t s = 0; s < ens.times.size(); ++s)
      for (int i = 0; i < ens.n_starts; ++i) {
        csv.cell(r).cell(i).cell(ens.times[s]);
        const double* x = ens.position(r, static_cast<int>(s), i);
        for (int a = 0; a < d; ++a) csv.cell(x[a]);
        if (ens.has_jacobian) {
          const double* J = ens.jacobian(r, static_cast<int>(s), i);
          for (int c = 0; c < d * d; ++c) csv.cell(J[c]);
        }
        csv.end();
      }
}

void stage_xval(Context& cx, std::vector<CheckReport>& reports) {
  if (!cx.cfg.wants("mc_pde_xval")) return;
  const auto& cfg = cx.cfg;
  const ScalarField f = sample_initial(cfg, cx.grid);
  const auto pts = probe_points(cfg);
  const double mu_v = cx.mu_for(cx.th.mu_E1);
  const double mu_g = cx.mu_for(cx.th.c_hat);
  InversionOptions inv;
  inv.spacing = cfg.mc.spacing;

  const auto v = solve_second_moment(cx.solver_drift, f, cx.solver(mu_v));
  const bool grad = cx.solver_drift.differentiable();
  MatrixSeries V;
  if (grad) V = solve_gradient_moment_system_q1(cx.solver_drift, f, cx.solver(mu_g));

  ScalarFn fn = [&](std::span<const double> x) { return cfg.initial.value(x); };
  GradientFn gfn = [&](std::span<const double> x, std::span<double> o) { cfg.initial.gradient(x, o); };
  std::vector<XvalRow> rows;
  auto csv = cx.csv("xval.csv", "probe,quantity,x,pde,mc,stderr,n,dropped,max_residual,allowance");
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto& x = pts[k];
    std::string xs;
    for (std::size_t a = 0; a < x.size(); ++a) xs += (a ? " " : "") + format_double(x[a]);
    auto emit = [&](const std::string& q, double pde, const MCEstimate& mc) {
      XvalRow r{static_cast<int>(k), q, pde, mc.mean, mc.stderr_};
      rows.push_back(r);
      csv.cell(static_cast<int>(k)).cell(q).cell(xs).cell(pde).cell(mc.mean).cell(mc.stderr_).cell(mc.n)
          .cell(mc.dropped).cell(mc.max_residual).cell(xval_allowance(r));
      csv.end();
    };
    emit("v", interpolate(cx.grid, v.final().data, x),
         mc_second_moment(fn, cx.solver_drift, x, cfg.solver.T, path_config(cx, mu_v), cfg.mc.realizations, inv));
    if (grad) {
      double tr = 0.0;
      for (int i = 0; i < cfg.d; ++i) tr += interpolate(cx.grid, V.final().comp[V.final().packed_index(i, i)], x);
      emit("grad_trace", tr,
           mc_gradient_moment(gfn, cx.solver_drift, x, cfg.solver.T, path_config(cx, mu_g), cfg.mc.realizations, 1,
                              inv));
    }
  }
  auto r = evaluate_xval(rows);
  r.details["mu_v"] = mu_v;
  r.details["mu_gradient"] = mu_g;
  r.details["realizations"] = cfg.mc.realizations;
  r.details["mc_dt"] = cfg.mc.dt;
  reports.push_back(r);
}

void write_probe_csv(const Context& cx, const std::vector<ProbeRow>& rows) {
  auto csv = cx.csv("probe.csv", "beta,hit_fraction,stderr,q05_min_distance,q50_min_distance,hits,n,steps");
  for (const auto& r : rows) {
    csv.cell(r.beta).cell(r.hit_fraction).cell(r.stderr_).cell(r.q05).cell(r.q50).cell(r.hits).cell(r.n).cell(r.steps);
    csv.end();
  }
}

std::vector<ProbeRow> read_probe_csv(const fs::path& p) {
  std::vector<ProbeRow> rows;
  for (const auto& c : read_csv_rows(p)) {
    ProbeRow r;
    r.beta = std::stod(c.at(0));
    r.hit_fraction = std::stod(c.at(1));
    r.stderr_ = std::stod(c.at(2));
    r.q05 = std::stod(c.at(3));
    r.q50 = std::stod(c.at(4));
    r.hits = std::stol(c.at(5));
    r.n = std::stol(c.at(6));
    r.steps = std::stol(c.at(7));
    rows.push_back(r);
  }
  return rows;
}

void stage_probe(Context& cx, std::vector<CheckReport>& reports) {
  ProbeConfig pc = cx.cfg.probe.value_or(ProbeConfig{});
  pc.d = cx.cfg.d;
  pc.seed = cx.cfg.seed;
  if (static_cast<int>(pc.x0.size()) != pc.d) {
    pc.x0.assign(static_cast<std::size_t>(pc.d), 0.0);
    pc.x0[0] = 0.5;
  }
  const auto rows = criticality_probe(pc);
  write_probe_csv(cx, rows);
  if (cx.cfg.wants("criticality")) {
    auto r = evaluate_criticality(rows, pc.d);
    r.details["probe"] = pc.to_json();
    reports.push_back(r);
  }
}

const char* kReportFiles[] = {"manifest.json", "timings.json", "verify_report.json", "verify_report.txt"};

json build_manifest(const fs::path& out, const std::string& hash, std::uint64_t seed) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), out).generic_string();
    if (std::any_of(std::begin(kReportFiles), std::end(kReportFiles), [&](const char* s) { return rel == s; }))
      continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json art = json::object();
  for (const auto& f : files) art[f] = sha256_file((out / f).string());
  return {{"config_hash", hash}, {"seed", seed}, {"artifacts", art}};
}

std::string report_text(const json& rep, const std::vector<CheckReport>& checks) {
  std::ostringstream os;
  os << "formbound-lab report: " << rep.at("name").get<std::string>() << "\n"
     << "config_hash=" << rep.at("config_hash").get<std::string>() << " seed=" << rep.at("seed").get<std::uint64_t>()
     << "\nsubcommand=" << rep.at("subcommand").get<std::string>() << "\n";
  if (rep.contains("thresholds")) {
    const auto& t = rep.at("thresholds");
    os << "thresholds: delta=" << format_double(t.at("delta").get<double>())
       << " c_delta=" << format_double(t.at("c_delta").get<double>())
       << " p_c=" << (t.at("p_c").is_number() ? format_double(t.at("p_c").get<double>()) : std::string("inf"))
       << " mu_E1=" << format_double(t.at("mu_E1").get<double>())
       << " c_hat=" << format_double(t.at("c_hat").get<double>())
       << " mu_dual=" << format_double(t.at("mu_dual").get<double>()) << "\n";
  }
  if (rep.contains("error")) os << "ERROR " << rep.at("error").get<std::string>() << "\n";
  for (const auto& c : checks) os << check_line(c) << "\n";
  os << (rep.at("all_pass").get<bool>() ? "ALL PASS" : "NOT ALL PASS") << "\n";
  return os.str();
}

CheckReport check_from_json(const json& j) {
  CheckReport r;
  r.name = j.at("name");
  r.tag = j.at("tag");
  r.lhs = j.at("lhs");
  r.bound = j.at("bound");
  r.constant = j.at("constant");
  r.tolerance = j.at("tolerance");
  r.margin = j.at("margin").is_number() ? j.at("margin").get<double>() : INFINITY;
  r.pass = j.at("pass");
  r.refused = j.at("refused");
  if (j.contains("gate")) r.gate = j.at("gate");
  if (j.contains("details")) r.details = j.at("details");
  return r;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, const std::string& subcommand) {
  const auto stages = stages_for(subcommand);
  auto has = [&](Stage s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };
  const fs::path out = cfg.output;
  fs::create_directories(out);
  Context cx(cfg, out);
  RunOutcome res;
  std::vector<CheckReport>& reports = res.checks;
  std::map<std::string, GateError> refused;
  Stage current = Stage::certify;
  auto clock = std::chrono::steady_clock::now();
  auto lap = [&](const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    cx.timings[name] = std::chrono::duration<double>(now - clock).count();
    clock = now;
  };

  json rep = {{"name", cfg.name},
              {"config_hash", cx.hash},
              {"seed", cfg.seed},
              {"subcommand", subcommand},
              {"stages", json::array()}};
  for (auto s : stages) rep["stages"].push_back(to_string(s));
  std::ofstream(out / "config.json") << cfg.canonical().dump(2) << "\n";

  try {
    cx.grid = cfg.grid();
    cx.drift = drift_from_json(cfg.drift, cfg.base_dir);
    if (cx.drift.dimension() != cfg.d) throw std::invalid_argument("drift dimension differs from config d");
    cx.solver_drift = cx.drift;

    if (has(Stage::certify)) {
      current = Stage::certify;
      stage_certify(cx, reports);
      lap("certify");
      rep["certificate"] = cx.certificate_json;

      // certificate seen by the solvers, then every gate before any heavy work
      if (!cfg.mollify.schedule.empty()) {
        const double g = cfg.mollify.schedule.at(static_cast<std::size_t>(cfg.mollify.member - 1));
        cx.solver_delta = std::pow(std::sqrt(cx.cert.delta) + std::sqrt(g), 2);
        cx.solver_c_delta = cfg.mollify.lambda * cx.solver_delta;
      } else {
        cx.solver_delta = cx.cert.delta;
        cx.solver_c_delta = cx.cert.c_delta;
      }
      cx.th = thresholds(cfg.d, cfg.solver.q, cfg.solver.p, cx.solver_delta, cx.solver_c_delta, cfg.solver.sigma);
      rep["thresholds"] = cx.th.to_json();
      if (has(Stage::moments)) {
        auto gate = [&](const std::string& tag, auto&& fn) {
          if (!cfg.wants(tag)) return;
          try {
            fn();
          } catch (const GateError& e) {
            refused.emplace(tag, e);
            reports.push_back(refused_report(e.check(), tag, e));
          }
        };
        gate("E1", [&] { require_E1_gates(cx.th, cx.mu_for(cx.th.mu_E1)); });
        gate("gradL2", [&] {
          if (cfg.solver.q != 1) throw GateError("gradL2", "q = 1 (only the q = 1 system is solved)");
          require_gradient_gates(cx.th, cx.mu_for(cx.th.c_hat));
        });
        gate("dual", [&] {
          require_dual_gates(cx.th, cx.mu_for(cx.th.mu_dual));
          const double br = dual_bracket(cfg.solver.sigma, cx.solver_delta, cfg.weight.kappa, cfg.weight.theta);
          if (!(br > 0.0))
            throw GateError("dual", "weighted energy bracket > 0 violated (bracket=" + format_double(br) + ")");
        });
      }
    }
    // a mollified drift is only built when something consumes it
    const bool moments_live = has(Stage::moments) && std::any_of(cfg.checks.begin(), cfg.checks.end(), [&](const std::string& t) {
      return (t == "E1" || t == "gradL2" || t == "dual") && !refused.count(t);
    });
    const bool need_mollify = subcommand == "mollify" || cfg.wants("mollifier") || moments_live ||
                              has(Stage::flow) || has(Stage::xval);
    if (has(Stage::mollify) && need_mollify) {
      current = Stage::mollify;
      stage_mollify(cx, reports);
      lap("mollify");
    }
    if (has(Stage::moments)) {
      current = Stage::moments;
      stage_moments(cx, reports, refused);
      lap("moments");
    }
    if (has(Stage::flow)) {
      current = Stage::flow;
      stage_flow(cx);
      lap("flow");
    }
    if (has(Stage::xval)) {
      current = Stage::xval;
      stage_xval(cx, reports);
      lap("xval");
    }
    if (has(Stage::probe) && (subcommand == "probe" || cfg.wants("criticality") || cfg.probe)) {
      current = Stage::probe;
      stage_probe(cx, reports);
      lap("probe");
    }
  } catch (const GateError& e) {
    res.error = StageError(current, e.what()).what();
  } catch (const std::exception& e) {
    res.error = StageError(current, e.what()).what();
  }

  res.all_pass = res.error.empty() && std::all_of(reports.begin(), reports.end(), [](const CheckReport& r) {
                   return r.pass;
                 });
  res.exit_code = res.all_pass ? 0 : 1;
  if (!res.error.empty()) res.exit_code = 2;
  rep["checks"] = json::array();
  for (const auto& r : reports) rep["checks"].push_back(r.to_json());
  rep["all_pass"] = res.all_pass;
  if (!res.error.empty()) rep["error"] = res.error;
  res.report = rep;
  std::ofstream(out / "report.json") << rep.dump(2) << "\n";
  write_text(out / "report.txt", report_text(rep, reports));
  json tj = json::object();
  for (const auto& [k, v] : cx.timings) tj[k] = v;
  std::ofstream(out / "timings.json") << tj.dump(2) << "\n";
  std::ofstream(out / "manifest.json") << build_manifest(out, cx.hash, cfg.seed).dump(2) << "\n";
  return res;
}

VerifyOutcome verify_output(const std::string& out_dir) {
  const fs::path out = out_dir;
  VerifyOutcome vo;
  json vr;
  std::vector<std::string> problems;

  const json manifest = json::parse(read_text(out / "manifest.json"));
  const json report = json::parse(read_text(out / "report.json"));
  const ExperimentConfig cfg = parse_config(json::parse(read_text(out / "config.json")));
  const std::string hash = cfg.hash();
  if (hash != manifest.at("config_hash").get<std::string>()) problems.push_back("config hash differs from manifest");
  if (hash != report.at("config_hash").get<std::string>()) problems.push_back("config hash differs from report");

  const json current = build_manifest(out, manifest.at("config_hash"), manifest.at("seed"));
  const auto& want = manifest.at("artifacts");
  const auto& have = current.at("artifacts");
  for (auto it = want.begin(); it != want.end(); ++it) {
    if (!have.contains(it.key())) problems.push_back("missing artifact " + it.key());
    else if (have.at(it.key()) != it.value()) problems.push_back("hash mismatch " + it.key());
  }
  for (auto it = have.begin(); it != have.end(); ++it)
    if (!want.contains(it.key())) problems.push_back("untracked artifact " + it.key());
  vo.hashes_ok = problems.empty();

  // CSV provenance header must match the config hash and seed
  const std::string header = "# config_hash=" + hash + " seed=" + std::to_string(cfg.seed);
  for (auto it = want.begin(); it != want.end(); ++it) {
    const auto& name = it.key();
    if (name.size() < 4 || name.compare(name.size() - 4, 4, ".csv") != 0 || !fs::exists(out / name)) continue;
    std::ifstream in(out / name);
    std::string first;
    std::getline(in, first);
    if (first != header) problems.push_back("provenance header mismatch in " + name);
  }

  std::vector<CheckReport> checks;
  bool all = vo.hashes_ok && problems.empty() && !report.contains("error");
  for (const auto& cj : report.at("checks")) {
    CheckReport c = check_from_json(cj);
    CheckReport re = c;
    if (!c.refused) try {
      if (c.tag == "E1" || c.tag == "dual") {
        re.pass = c.lhs <= c.constant * c.bound * (1.0 + c.tolerance);
      } else if (c.tag == "gradL2") {
        re.pass = c.lhs <= c.constant * c.bound * (1.0 + c.tolerance) &&
                  c.details.value("homogeneity_ratio_defect", 1.0) <= 1e-10;
      } else if (c.tag == "two_est") {
        re = evaluate_two_est(cfg.weight);
      } else if (c.tag == "certificate") {
        re = evaluate_certificate(c.details);
      } else if (c.tag == "mollifier") {
        re = evaluate_mollifier(c.details.at("table"));
        re.details["table"] = c.details.at("table");
      } else if (c.tag == "mc_pde_xval") {
        std::vector<XvalRow> rows;
        for (const auto& row : read_csv_rows(out / "xval.csv"))
          rows.push_back({std::stoi(row.at(0)), row.at(1), std::stod(row.at(3)), std::stod(row.at(4)),
                          std::stod(row.at(5))});
        re = evaluate_xval(rows);
      } else if (c.tag == "criticality") {
        re = evaluate_criticality(read_probe_csv(out / "probe.csv"), cfg.d);
      }
    } catch (const std::exception& e) {
      re.pass = false;
      problems.push_back("check " + c.tag + " cannot be re-evaluated: " + e.what());
    }
    if (re.pass != c.pass) problems.push_back("check " + c.tag + " re-evaluates to " + (re.pass ? "pass" : "fail"));
    all = all && re.pass && !c.refused;
    checks.push_back(re);
  }
  vo.all_pass = all && problems.empty();
  vo.exit_code = vo.all_pass ? 0 : 1;

  vr["config_hash"] = hash;
  vr["seed"] = cfg.seed;
  vr["hashes_ok"] = vo.hashes_ok;
  vr["problems"] = problems;
  vr["checks"] = json::array();
  for (const auto& c : checks)
    vr["checks"].push_back({{"tag", c.tag}, {"pass", c.pass}, {"refused", c.refused}, {"lhs", c.lhs}, {"bound", c.bound}});
  vr["all_pass"] = vo.all_pass;
  vo.report = vr;

  std::ostringstream os;
  os << "verify " << cfg.name << " config_hash=" << hash << " seed=" << cfg.seed << "\n";
  os << "artifact hashes: " << (vo.hashes_ok ? "ok" : "MISMATCH") << "\n";
  for (const auto& p : problems) os << "problem: " << p << "\n";
  for (const auto& c : checks) os << check_line(c) << "\n";
  os << (vo.all_pass ? "ALL PASS" : "NOT ALL PASS") << "\n";
  write_text(out / "verify_report.json", vr.dump(2) + "\n");
  write_text(out / "verify_report.txt", os.str());
  return vo;
}

}  // namespace fbl
