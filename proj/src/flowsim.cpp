#include "fbl/flowsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fbl/rng.hpp"

namespace fbl {
namespace {

constexpr std::uint64_t kFlowDomain = 0x466c6f77ULL;   // noise of flow realizations
constexpr std::uint64_t kPathDomain = 0x50617468ULL;   // independent paths

double norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// Solves A z = r in place (A row-major n x n, copied). Returns false when singular.
bool solve_small(std::vector<double> A, std::span<double> r, int n) {
  double scale = 0.0;
  for (double v : A) scale = std::max(scale, std::abs(v));
  if (!(scale > 0.0)) return false;
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int i = c + 1; i < n; ++i)
      if (std::abs(A[i * n + c]) > std::abs(A[piv * n + c])) piv = i;
    if (std::abs(A[piv * n + c]) <= 1e-12 * scale) return false;
    if (piv != c) {
      for (int k = 0; k < n; ++k) std::swap(A[c * n + k], A[piv * n + k]);
      std::swap(r[c], r[piv]);
    }
    for (int i = c + 1; i < n; ++i) {
      const double f = A[i * n + c] / A[c * n + c];
      for (int k = c; k < n; ++k) A[i * n + k] -= f * A[c * n + k];
      r[i] -= f * r[c];
    }
  }
  for (int c = n - 1; c >= 0; --c) {
    double s = r[c];
    for (int k = c + 1; k < n; ++k) s -= A[c * n + k] * r[k];
    r[c] = s / A[c * n + c];
  }
  return true;
}

double determinant(std::vector<double> A, int n) {
  double det = 1.0;
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int i = c + 1; i < n; ++i)
      if (std::abs(A[i * n + c]) > std::abs(A[piv * n + c])) piv = i;
    if (A[piv * n + c] == 0.0) return 0.0;
    if (piv != c) {
      for (int k = 0; k < n; ++k) std::swap(A[c * n + k], A[piv * n + k]);
      det = -det;
    }
    det *= A[c * n + c];
    for (int i = c + 1; i < n; ++i) {
      const double f = A[i * n + c] / A[c * n + c];
      for (int k = c; k < n; ++k) A[i * n + k] -= f * A[c * n + k];
    }
  }
  return det;
}

void capped_gradient(const DriftField& b, std::span<const double> x, double r_cap, std::span<double> out) {
  const int d = b.dimension();
  if (b.kind() == DriftKind::hardy && r_cap > 0.0) {
    const double r = norm(x);
    if (r < r_cap) {
      if (r == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
      }
      std::vector<double> xc(x.begin(), x.end());
      for (double& v : xc) v *= r_cap / r;
      b.gradient(xc, out);
      return;
    }
  } else if (b.kind() == DriftKind::sum) {
    std::vector<double> tmp(static_cast<std::size_t>(d * d));
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& p : b.parts()) {
      capped_gradient(p, x, r_cap, tmp);
      for (int c = 0; c < d * d; ++c) out[c] += b.scale() * tmp[c];
    }
    return;
  }
  b.gradient(x, out);
}

std::vector<int> snapshot_steps(int steps, int n_snapshots) {
  std::vector<int> s{0};
  const int k = std::max(n_snapshots, 1);
  for (int j = 1; j <= k; ++j) s.push_back(static_cast<int>(std::llround(static_cast<double>(j) * steps / k)));
  return s;
}

int step_count(const PathConfig& cfg) { return std::max(1, static_cast<int>(std::ceil(cfg.T / cfg.dt - 1e-9))); }

bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

void PathConfig::validate() const {
  if (!(sigma > 0.0)) throw std::invalid_argument("PathConfig: sigma must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("PathConfig: dt must be positive");
  if (!(T >= 0.0)) throw std::invalid_argument("PathConfig: T must be >= 0");
  if (mu < 0.0) throw std::invalid_argument("PathConfig: mu must be >= 0");
  if (n_paths < 1) throw std::invalid_argument("PathConfig: n_paths must be >= 1");
  if (r_cap < 0.0) throw std::invalid_argument("PathConfig: r_cap must be >= 0");
}

nlohmann::json PathConfig::to_json() const {
  return {{"sigma", sigma}, {"mu", mu},       {"dt", dt},     {"T", T},
          {"n_paths", n_paths}, {"r_cap", r_cap}, {"seed", seed}, {"n_snapshots", n_snapshots}};
}

nlohmann::json MCEstimate::to_json() const {
  return {{"mean", mean}, {"stderr", stderr_}, {"n", n}, {"dropped", dropped}, {"max_residual", max_residual}};
}

void capped_drift(const DriftField& b, std::span<const double> x, double r_cap, std::span<double> out) {
  const auto d = static_cast<std::size_t>(b.dimension());
  if (b.kind() == DriftKind::hardy) {
    const double r = norm(x);
    if (r_cap > 0.0 && r < r_cap) {
      if (r == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
      }
      std::vector<double> xc(x.begin(), x.end());
      for (double& v : xc) v *= r_cap / r;
      b.eval(xc, out);
      return;
    }
    b.eval(x, out);
    return;
  }
  if (b.kind() == DriftKind::sum) {
    std::vector<double> tmp(d);
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& p : b.parts()) {
      capped_drift(p, x, r_cap, tmp);
      for (std::size_t k = 0; k < d; ++k) out[k] += b.scale() * tmp[k];
    }
    return;
  }
  b.eval(x, out);
  const double m = norm(out);
  if (r_cap > 0.0 && (m > 1.0 / r_cap || !std::isfinite(m))) {
    if (!std::isfinite(m)) {
      const double r = norm(x);
      for (std::size_t k = 0; k < d; ++k) out[k] = r > 0.0 ? x[k] / (r * r_cap) : 0.0;
    } else {
      for (std::size_t k = 0; k < d; ++k) out[k] *= 1.0 / (r_cap * m);
    }
  }
}

Trajectories simulate_paths(const DriftField& b, std::span<const double> starts, const PathConfig& cfg) {
  cfg.validate();
  const int d = b.dimension();
  if (starts.size() % static_cast<std::size_t>(d) != 0) throw std::invalid_argument("simulate_paths: ragged starts");
  Trajectories tr;
  tr.d = d;
  tr.n_starts = static_cast<int>(starts.size() / d);
  tr.n_paths = cfg.n_paths;
  const int steps = step_count(cfg);
  const double dt = cfg.T / steps;
  const auto snaps = snapshot_steps(steps, cfg.n_snapshots);
  for (int s : snaps) tr.times.push_back(s == steps ? cfg.T : s * dt);
  const long total = static_cast<long>(tr.n_starts) * cfg.n_paths;
  tr.positions.assign(static_cast<std::size_t>(total) * snaps.size() * d, 0.0);
  const double sq = cfg.sigma * std::sqrt(dt);
  std::string error;

#pragma omp parallel for schedule(static)
  for (long p = 0; p < total; ++p) {
    const int start = static_cast<int>(p / cfg.n_paths);
    auto rng = make_stream(cfg.seed, static_cast<std::uint64_t>(p), kPathDomain);
    std::normal_distribution<double> normal;
    std::vector<double> X(starts.begin() + start * d, starts.begin() + (start + 1) * d), c(d);
    double* out = tr.positions.data() + static_cast<std::size_t>(p) * snaps.size() * d;
    std::copy(X.begin(), X.end(), out);
    std::size_t next = 1;
    for (int k = 1; k <= steps; ++k) {
      capped_drift(b, X, cfg.r_cap, c);
      for (int a = 0; a < d; ++a) X[a] += -c[a] * dt + sq * normal(rng);
      if (!all_finite(X)) {
#pragma omp critical
        if (error.empty())
          error = "simulate_paths: non-finite state on path " + std::to_string(p) + " at step " + std::to_string(k);
        break;
      }
      while (next < snaps.size() && snaps[next] == k) {
        std::copy(X.begin(), X.end(), out + next * d);
        ++next;
      }
    }
  }
  if (!error.empty()) throw std::runtime_error(error);
  return tr;
}

std::vector<double> realization_noise(const PathConfig& cfg, std::uint64_t realization, int steps, int d) {
  auto rng = make_stream(cfg.seed, realization, kFlowDomain);
  std::normal_distribution<double> normal;
  std::vector<double> xi(static_cast<std::size_t>(steps) * d);
  for (double& v : xi) v = normal(rng);
  return xi;
}

FlowEnsemble simulate_flow(const DriftField& b, std::span<const double> starts, const PathConfig& cfg,
                           int n_realizations, std::uint64_t first_realization) {
  cfg.validate();
  if (n_realizations < 1) throw std::invalid_argument("simulate_flow: need at least one realization");
  const int d = b.dimension();
  if (starts.size() % static_cast<std::size_t>(d) != 0) throw std::invalid_argument("simulate_flow: ragged starts");
  FlowEnsemble ens;
  ens.d = d;
  ens.n_starts = static_cast<int>(starts.size() / d);
  ens.n_realizations = n_realizations;
  ens.has_jacobian = b.differentiable();
  ens.starts.assign(starts.begin(), starts.end());
  const int steps = step_count(cfg);
  const double dt = cfg.T / steps;
  const auto snaps = snapshot_steps(steps, cfg.n_snapshots);
  for (int s : snaps) ens.times.push_back(s == steps ? cfg.T : s * dt);
  const std::size_t nt = snaps.size();
  const std::size_t slots = static_cast<std::size_t>(n_realizations) * nt * ens.n_starts;
  ens.positions.assign(slots * d, 0.0);
  if (ens.has_jacobian) ens.jacobians.assign(slots * d * d, 0.0);
  ens.noise.assign(static_cast<std::size_t>(n_realizations) * nt * d, 0.0);
  const double sq = cfg.sigma * std::sqrt(dt);
  std::vector<long> bad(static_cast<std::size_t>(n_realizations), 0);
  std::string error;

#pragma omp parallel for schedule(static)
  for (int r = 0; r < n_realizations; ++r) {
    const auto xi = realization_noise(cfg, first_realization + static_cast<std::uint64_t>(r), steps, d);
    // sigma B at snapshot steps
    {
      std::vector<double> B(d, 0.0);
      double* nb = ens.noise.data() + static_cast<std::size_t>(r) * nt * d;
      std::size_t next = 1;
      for (int k = 1; k <= steps; ++k) {
        for (int a = 0; a < d; ++a) B[a] += sq * xi[static_cast<std::size_t>(k - 1) * d + a];
        while (next < nt && snaps[next] == k) {
          std::copy(B.begin(), B.end(), nb + next * d);
          ++next;
        }
      }
    }
    std::vector<double> X(d), c(d), G(static_cast<std::size_t>(d * d)), J(static_cast<std::size_t>(d * d)),
        Jn(static_cast<std::size_t>(d * d));
    for (int i = 0; i < ens.n_starts; ++i) {
      std::copy(starts.begin() + i * d, starts.begin() + (i + 1) * d, X.begin());
      std::fill(J.begin(), J.end(), 0.0);
      for (int a = 0; a < d; ++a) J[a * d + a] = 1.0;
      auto store = [&](std::size_t s) {
        const std::size_t sl = ens.slot(r, static_cast<int>(s), i);
        std::copy(X.begin(), X.end(), ens.positions.begin() + sl * d);
        if (ens.has_jacobian) {
          std::copy(J.begin(), J.end(), ens.jacobians.begin() + sl * d * d);
          if (!(determinant(J, d) > 0.0)) ++bad[r];
        }
      };
      store(0);
      std::size_t next = 1;
      for (int k = 1; k <= steps; ++k) {
        capped_drift(b, X, cfg.r_cap, c);
        if (ens.has_jacobian) {
          capped_gradient(b, X, cfg.r_cap, G);
          // Jn = (I - dt G) J
          for (int a = 0; a < d; ++a)
            for (int col = 0; col < d; ++col) {
              double s = J[a * d + col];
              for (int m = 0; m < d; ++m) s -= dt * G[a * d + m] * J[m * d + col];
              Jn[a * d + col] = s;
            }
          J.swap(Jn);
        }
        for (int a = 0; a < d; ++a) X[a] += -c[a] * dt + sq * xi[static_cast<std::size_t>(k - 1) * d + a];
        if (!all_finite(X)) {
#pragma omp critical
          if (error.empty())
            error = "simulate_flow: non-finite state in realization " + std::to_string(r) + ", start " +
                    std::to_string(i) + ", step " + std::to_string(k);
          break;
        }
        while (next < nt && snaps[next] == k) store(next++);
      }
    }
  }
  if (!error.empty()) throw std::runtime_error(error);
  for (long v : bad) ens.nonpositive_det += v;
  return ens;
}

InverseResult invert_flow(const FlowEnsemble& ens, int snap, int realization, std::span<const double> x) {
  const int d = ens.d;
  if (snap < 0 || snap >= static_cast<int>(ens.times.size())) throw std::out_of_range("invert_flow: snapshot");
  if (realization < 0 || realization >= ens.n_realizations) throw std::out_of_range("invert_flow: realization");
  InverseResult res;
  res.y.assign(x.begin(), x.end());
  if (ens.n_starts == 0) {
    res.extrapolated = true;
    return res;
  }
  int best = -1, second = -1;
  double bd = std::numeric_limits<double>::infinity(), sd = bd;
  std::vector<double> lo(d, std::numeric_limits<double>::infinity()), hi(d, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < ens.n_starts; ++i) {
    const double* p = ens.position(realization, snap, i);
    double dist = 0.0;
    for (int a = 0; a < d; ++a) {
      dist += (p[a] - x[a]) * (p[a] - x[a]);
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
    if (dist < bd) {
      second = best;
      sd = bd;
      best = i;
      bd = dist;
    } else if (dist < sd) {
      second = i;
      sd = dist;
    }
  }
  for (int a = 0; a < d; ++a)
    if (x[a] < lo[a] || x[a] > hi[a]) res.extrapolated = true;
  res.nearest = best;
  const double* xb = ens.starts.data() + static_cast<std::size_t>(best) * d;
  const double* pb = ens.position(realization, snap, best);
  std::copy(xb, xb + d, res.y.begin());
  if (!ens.has_jacobian) {
    res.singular = true;
    return res;
  }
  const double* Jb = ens.jacobian(realization, snap, best);
  std::vector<double> J(Jb, Jb + d * d), r(d);
  for (int a = 0; a < d; ++a) r[a] = x[a] - pb[a];
  if (!solve_small(J, r, d)) {
    res.singular = true;
    return res;
  }
  for (int a = 0; a < d; ++a) res.y[a] = xb[a] + r[a];
  if (second >= 0) {
    // quadratic remainder of the linearization along the second-nearest node
    const double* xs = ens.starts.data() + static_cast<std::size_t>(second) * d;
    const double* ps = ens.position(realization, snap, second);
    double rem = 0.0, h2 = 0.0, step = 0.0;
    for (int a = 0; a < d; ++a) {
      double lin = pb[a];
      for (int m = 0; m < d; ++m) lin += Jb[a * d + m] * (xs[m] - xb[m]);
      rem += (ps[a] - lin) * (ps[a] - lin);
      h2 += (xs[a] - xb[a]) * (xs[a] - xb[a]);
      step += r[a] * r[a];
    }
    res.residual = h2 > 0.0 ? std::sqrt(rem) * step / h2 : 0.0;
  }
  return res;
}

namespace {

struct LocalSample {
  bool ok = false;
  std::vector<double> y;
  std::vector<double> J;  // J at y's nearest node (row-major)
  double residual = 0.0;
};

// Inverts the flow of -field (dX = +b dt + sigma dB) at x for one realization
// using a small start grid that is re-centred until x lies inside its image.
LocalSample local_inverse(const DriftField& neg, std::span<const double> x, const PathConfig& cfg,
                          std::uint64_t realization, const InversionOptions& opt, bool need_jacobian) {
  const int d = neg.dimension();
  LocalSample out;
  const int steps = step_count(cfg);
  const double dt = cfg.T / steps;
  const auto xi = realization_noise(cfg, realization, steps, d);
  std::vector<double> centre(x.begin(), x.end());
  for (int k = 0; k < steps; ++k)
    for (int a = 0; a < d; ++a) centre[a] -= cfg.sigma * std::sqrt(dt) * xi[static_cast<std::size_t>(k) * d + a];
  if (cfg.T == 0.0) {
    out.ok = true;
    out.y.assign(x.begin(), x.end());
    out.J.assign(static_cast<std::size_t>(d * d), 0.0);
    for (int a = 0; a < d; ++a) out.J[a * d + a] = 1.0;
    return out;
  }
  const int n = opt.points_per_axis;
  const int half = n / 2;
  long count = 1;
  for (int a = 0; a < d; ++a) count *= n;
  std::vector<double> starts(static_cast<std::size_t>(count) * d);
  PathConfig one = cfg;
  one.n_snapshots = 1;
  for (int attempt = 0; attempt <= opt.max_recentre; ++attempt) {
    for (long i = 0; i < count; ++i) {
      long rem = i;
      for (int a = d - 1; a >= 0; --a) {
        const int j = static_cast<int>(rem % n);
        rem /= n;
        starts[static_cast<std::size_t>(i) * d + a] = centre[a] + (j - half) * opt.spacing;
      }
    }
    const FlowEnsemble ens = simulate_flow(neg, starts, one, 1, realization);
    const InverseResult inv = invert_flow(ens, 1, 0, x);
    if (inv.singular) return out;
    // a boundary node as nearest image means x may lie outside the grid's image
    bool edge = false;
    {
      long rem = inv.nearest;
      for (int a = d - 1; a >= 0; --a) {
        const int j = static_cast<int>(rem % n);
        rem /= n;
        if (j == 0 || j == n - 1) edge = true;
      }
    }
    if (!inv.extrapolated && !edge) {
      out.ok = true;
      out.y = inv.y;
      out.residual = inv.residual;
      if (need_jacobian) {
        const double* J = ens.jacobian(0, 1, inv.nearest);
        out.J.assign(J, J + d * d);
      }
      return out;
    }
    centre = inv.y;
  }
  return out;
}

MCEstimate summarize(const std::vector<double>& vals, const std::vector<char>& ok, const std::vector<double>& resid) {
  MCEstimate e;
  double s = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (!ok[i]) {
      ++e.dropped;
      continue;
    }
    s += vals[i];
    ++e.n;
    e.max_residual = std::max(e.max_residual, resid[i]);
  }
  if (e.n == 0) return e;
  e.mean = s / static_cast<double>(e.n);
  double ss = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i)
    if (ok[i]) ss += (vals[i] - e.mean) * (vals[i] - e.mean);
  if (e.n > 1) e.stderr_ = std::sqrt(ss / static_cast<double>(e.n - 1) / static_cast<double>(e.n));
  return e;
}

}  // namespace

MCEstimate mc_second_moment(const ScalarFn& f, const DriftField& b, std::span<const double> x, double t,
                            const PathConfig& cfg, int n_realizations, const InversionOptions& inv) {
  PathConfig c = cfg;
  c.T = t;
  c.validate();
  const DriftField neg = b.scaled(-1.0);
  std::vector<double> vals(static_cast<std::size_t>(n_realizations)), resid(vals.size(), 0.0);
  std::vector<char> ok(vals.size(), 0);
  const double decay = std::exp(-2.0 * c.mu * t);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < n_realizations; ++r) {
    const LocalSample s = local_inverse(neg, x, c, static_cast<std::uint64_t>(r), inv, false);
    if (!s.ok) continue;
    const double fy = f(s.y);
    vals[r] = decay * fy * fy;
    resid[r] = s.residual;
    ok[r] = 1;
  }
  return summarize(vals, ok, resid);
}

MCEstimate mc_gradient_moment(const GradientFn& grad_f, const DriftField& b, std::span<const double> x, double t,
                              const PathConfig& cfg, int n_realizations, int q, const InversionOptions& inv) {
  if (q < 1) throw std::invalid_argument("mc_gradient_moment: q must be >= 1");
  PathConfig c = cfg;
  c.T = t;
  c.validate();
  const int d = b.dimension();
  if (!b.differentiable()) throw std::invalid_argument("mc_gradient_moment: drift has no gradient");
  const DriftField neg = b.scaled(-1.0);
  std::vector<double> vals(static_cast<std::size_t>(n_realizations)), resid(vals.size(), 0.0);
  std::vector<char> ok(vals.size(), 0);
  const double decay = std::exp(-c.mu * t);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < n_realizations; ++r) {
    const LocalSample s = local_inverse(neg, x, c, static_cast<std::uint64_t>(r), inv, true);
    if (!s.ok) continue;
    std::vector<double> g(d);
    grad_f(s.y, g);
    // grad u = g^T J^{-1}  <=>  J^T z = g
    std::vector<double> JT(static_cast<std::size_t>(d * d));
    for (int a = 0; a < d; ++a)
      for (int m = 0; m < d; ++m) JT[a * d + m] = s.J[m * d + a];
    if (!solve_small(JT, g, d)) continue;
    double n2 = 0.0;
    for (double v : g) n2 += v * v;
    vals[r] = std::pow(decay * decay * n2, q);
    resid[r] = s.residual;
    ok[r] = 1;
  }
  return summarize(vals, ok, resid);
}

}  // namespace fbl
