#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fbl/moments.hpp"
#include "fbl/simd.hpp"
#include "fbl/spectral.hpp"

namespace fbl {
namespace {

inline double pos(double v) { return v > 0.0 ? v : 0.0; }

// Directional upwind / flux-form operators on a BoxGrid. Axes other than the
// last are processed as contiguous rows of length stride(axis); the last axis
// goes through a padded line buffer holding the ghost values.
class Transport {
public:
  explicit Transport(const BoxGrid& g)
      : g_(g), n_(static_cast<std::size_t>(g.points_per_axis())), periodic_(g.boundary() == Boundary::periodic),
        k_(simd::kernels()) {
    const std::size_t widest = g.dim() > 1 ? g.stride(0) : 1;
    zero_.assign(std::max(widest, n_ + 2), 0.0);
    flux_.assign((n_ + 1) * std::max<std::size_t>(widest, 1), 0.0);
    pad_.assign(n_ + 2, 0.0);
    vpad_.assign(n_ + 2, 0.0);
  }

  // out -= coef * sum_a [vel_a^+ D^- cur + vel_a^- D^+ cur]
  void upwind(double* out, const double* cur, const std::vector<std::vector<double>>& vel, double coef) {
    const int d = g_.dim();
    for (int a = 0; a < d; ++a) {
      const double* v = vel[a].data();
      if (a < d - 1) {
        const std::size_t inner = g_.stride(a);
        const std::size_t outer = g_.size() / (n_ * inner);
        for (std::size_t o = 0; o < outer; ++o) {
          const std::size_t blk = o * n_ * inner;
          for (std::size_t j = 0; j < n_; ++j) {
            const std::size_t base = blk + j * inner;
            const double* prev = j > 0 ? cur + base - inner : (periodic_ ? cur + blk + (n_ - 1) * inner : zero_.data());
            const double* next = j + 1 < n_ ? cur + base + inner : (periodic_ ? cur + blk : zero_.data());
            k_.upwind_row(out + base, cur + base, prev, next, v + base, coef, inner);
          }
        }
      } else {
        for (std::size_t line = 0; line < g_.size(); line += n_) {
          fill_pad(cur + line);
          k_.upwind_row(out + line, pad_.data() + 1, pad_.data(), pad_.data() + 2, v + line, coef, n_);
        }
      }
    }
  }

  // out -= coef * sum_a (F_{j+1/2} - F_{j-1/2}), F = upwind flux of vel_a * cur
  void conservative(double* out, const double* cur, const std::vector<std::vector<double>>& vel, double coef) {
    const int d = g_.dim();
    for (int a = 0; a < d; ++a) {
      const double* v = vel[a].data();
      if (a < d - 1) {
        const std::size_t inner = g_.stride(a);
        const std::size_t outer = g_.size() / (n_ * inner);
        for (std::size_t o = 0; o < outer; ++o) {
          const std::size_t blk = o * n_ * inner;
          // face j separates rows j-1 and j, j = 0..n
          for (std::size_t j = 0; j <= n_; ++j) {
            const double *left, *right, *vl, *vr;
            if (j == 0) {
              right = cur + blk;
              vr = v + blk;
              left = periodic_ ? cur + blk + (n_ - 1) * inner : zero_.data();
              vl = periodic_ ? v + blk + (n_ - 1) * inner : vr;
            } else if (j == n_) {
              left = cur + blk + (n_ - 1) * inner;
              vl = v + blk + (n_ - 1) * inner;
              right = periodic_ ? cur + blk : zero_.data();
              vr = periodic_ ? v + blk : vl;
            } else {
              left = cur + blk + (j - 1) * inner;
              right = cur + blk + j * inner;
              vl = v + blk + (j - 1) * inner;
              vr = v + blk + j * inner;
            }
            k_.face_flux_row(flux_.data() + j * inner, left, right, vl, vr, inner);
          }
          for (std::size_t j = 0; j < n_; ++j)
            k_.flux_diff_row(out + blk + j * inner, flux_.data() + (j + 1) * inner, flux_.data() + j * inner, coef,
                             inner);
        }
      } else {
        for (std::size_t line = 0; line < g_.size(); line += n_) {
          fill_pad(cur + line);
          fill_vpad(v + line);
          k_.face_flux_row(flux_.data(), pad_.data(), pad_.data() + 1, vpad_.data(), vpad_.data() + 1, n_ + 1);
          k_.flux_diff_row(out + line, flux_.data() + 1, flux_.data(), coef, n_);
        }
      }
    }
  }

  // Largest coef = dt/h keeping the flux-form update with velocity vel_c
  // monotone: coef * max_i sum_a [af_right^+ + (-af_left)^+] <= 1.
  double monotone_coef_limit(const std::vector<std::vector<double>>& vel_c) const {
    const int d = g_.dim();
    double worst = 0.0;
    for (std::size_t i = 0; i < g_.size(); ++i) {
      double s = 0.0;
      for (int a = 0; a < d; ++a) {
        const int j = g_.index_along(i, a);
        const std::size_t st = g_.stride(a);
        const double vc = vel_c[a][i];
        double vr, vlft;
        if (j + 1 < static_cast<int>(n_)) vr = vel_c[a][i + st];
        else vr = periodic_ ? vel_c[a][i - (n_ - 1) * st] : vc;
        if (j > 0) vlft = vel_c[a][i - st];
        else vlft = periodic_ ? vel_c[a][i + (n_ - 1) * st] : vc;
        s += pos(0.5 * (vc + vr)) + pos(-0.5 * (vc + vlft));
      }
      worst = std::max(worst, s);
    }
    return worst > 0.0 ? 1.0 / worst : std::numeric_limits<double>::infinity();
  }

private:
  void fill_pad(const double* line) {
    std::copy(line, line + n_, pad_.begin() + 1);
    pad_[0] = periodic_ ? line[n_ - 1] : 0.0;
    pad_[n_ + 1] = periodic_ ? line[0] : 0.0;
  }
  void fill_vpad(const double* line) {
    std::copy(line, line + n_, vpad_.begin() + 1);
    vpad_[0] = periodic_ ? line[n_ - 1] : line[0];
    vpad_[n_ + 1] = periodic_ ? line[0] : line[n_ - 1];
  }

  const BoxGrid& g_;
  std::size_t n_;
  bool periodic_;
  const simd::KernelTable& k_;
  std::vector<double> zero_, flux_, pad_, vpad_;
};

double max_magnitude(const VectorField& v) {
  double m = 0.0;
  for (std::size_t i = 0; i < v.grid.size(); ++i) m = std::max(m, v.magnitude(i));
  return m;
}

double boundary_fraction(const BoxGrid& g, const std::vector<double>& v) {
  const int n = g.points_per_axis();
  double edge = 0.0, total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double a = std::abs(v[i]);
    total += a;
    for (int k = 0; k < g.dim(); ++k) {
      const int j = g.index_along(i, k);
      if (j == 0 || j == n - 1) {
        edge += a;
        break;
      }
    }
  }
  return total > 0.0 ? edge / total : 0.0;
}

struct StepPlan {
  double dt;
  int steps;
};

StepPlan plan_steps(const SolverConfig& cfg, double dt_limit, const std::string& who) {
  if (!(cfg.T > 0.0)) throw std::invalid_argument(who + ": T must be positive");
  if (!(cfg.sigma > 0.0)) throw std::invalid_argument(who + ": sigma must be positive");
  if (cfg.mu < 0.0) throw std::invalid_argument(who + ": mu must be >= 0");
  StepPlan p{};
  if (cfg.dt > 0.0) {
    if (cfg.dt > dt_limit * (1.0 + 1e-12))
      throw std::runtime_error(who + ": CFL violation, dt=" + std::to_string(cfg.dt) +
                               " exceeds limit " + std::to_string(dt_limit));
    p.steps = static_cast<int>(std::ceil(cfg.T / cfg.dt - 1e-9));
  } else {
    const double dt = std::min(cfg.cfl_safety * dt_limit, cfg.T / std::max(cfg.min_steps, 1));
    p.steps = static_cast<int>(std::ceil(cfg.T / dt - 1e-9));
  }
  p.steps = std::max(p.steps, 1);
  p.dt = cfg.T / p.steps;
  return p;
}

std::vector<double> diffusion_multiplier(const Spectral& sp, double sigma, double dt) {
  auto m = sp.discrete_k2();
  const double c = 0.5 * sigma * sigma * dt;
  for (double& v : m) v = std::exp(-c * v);
  return m;
}

bool should_snapshot(int step, int steps, int stride) {
  return step == 0 || step == steps || (stride > 0 && step % stride == 0);
}

void check_finite(const std::vector<double>& v, int step, const std::string& who) {
  const double s = simd::kernels().sum_sq(v.data(), v.size());
  if (!std::isfinite(s)) throw std::runtime_error(who + ": non-finite value at step " + std::to_string(step));
}

// Shared driver of the two scalar equations.
// Either upwind advection with vel_u, or flux form with vel_c followed by the
// per-node factor `growth`.
ScalarSeries run_scalar(const std::string& who, const BoxGrid& g, std::vector<double> state,
                        const std::vector<std::vector<double>>* vel_u, const std::vector<std::vector<double>>* vel_c,
                        const std::vector<double>* growth, double max_drift, double dt_limit, const SolverConfig& cfg,
                        const StepObserver<ScalarField>& observe) {
  const StepPlan plan = plan_steps(cfg, dt_limit, who);
  const auto& k = simd::kernels();
  Spectral sp(g);
  const auto diff = diffusion_multiplier(sp, cfg.sigma, plan.dt);
  const double decay = std::exp(-2.0 * cfg.mu * plan.dt);
  const double coef = plan.dt / g.spacing();
  Transport tr(g);

  ScalarSeries out;
  out.stats.steps = plan.steps;
  out.stats.dt = plan.dt;
  out.stats.dt_limit = dt_limit;
  out.stats.max_drift = max_drift;
  double vmax0 = 0.0;
  for (double v : state) vmax0 = std::max(vmax0, std::abs(v));

  ScalarField field(g);
  field.data = state;
  out.stats.boundary_fraction = boundary_fraction(g, field.data);
  if (observe) observe(0, 0.0, field);
  out.times.push_back(0.0);
  out.snapshots.push_back(field);

  std::vector<double> next(g.size());
  for (int s = 1; s <= plan.steps; ++s) {
    next = field.data;
    if (max_drift > 0.0) {
      if (vel_c) tr.conservative(next.data(), field.data.data(), *vel_c, coef);
      if (vel_u) tr.upwind(next.data(), field.data.data(), *vel_u, coef);
      if (growth)
        for (std::size_t i = 0; i < next.size(); ++i) next[i] *= (*growth)[i];
    }
    if (decay != 1.0) k.scale(next.data(), decay, next.size());
    sp.apply(next, diff);
    double mn = 0.0;
    out.stats.clip_total += k.clip_negative(next.data(), next.size(), &mn);
    if (vmax0 > 0.0) out.stats.min_relative = std::min(out.stats.min_relative, mn / vmax0);
    check_finite(next, s, who);
    field.data.swap(next);
    out.stats.boundary_fraction = std::max(out.stats.boundary_fraction, boundary_fraction(g, field.data));
    const double t = (s == plan.steps) ? cfg.T : s * plan.dt;
    if (observe) observe(s, t, field);
    if (should_snapshot(s, plan.steps, cfg.snapshot_stride)) {
      out.times.push_back(t);
      out.snapshots.push_back(field);
    }
  }
  return out;
}

}  // namespace

nlohmann::json SolverConfig::to_json() const {
  return {{"sigma", sigma}, {"mu", mu}, {"dt", dt}, {"T", T}, {"cfl_safety", cfl_safety},
          {"min_steps", min_steps}, {"snapshot_stride", snapshot_stride}};
}

nlohmann::json SolveStats::to_json() const {
  return {{"steps", steps},           {"dt", dt},
          {"dt_limit", std::isfinite(dt_limit) ? nlohmann::json(dt_limit) : nlohmann::json("inf")},
          {"max_drift", max_drift},   {"clip_total", clip_total},
          {"min_relative", min_relative}, {"boundary_fraction", boundary_fraction}};
}

VectorField drift_on_grid(const DriftField& b, const BoxGrid& g) {
  if (b.dimension() != g.dim()) throw std::invalid_argument("drift_on_grid: dimension mismatch");
  if (b.kind() == DriftKind::grid_sampled && b.grid_params().values->grid == g) {
    VectorField v = *b.grid_params().values;
    if (b.scale() != 1.0)
      for (auto& c : v.comp) simd::kernels().scale(c.data(), b.scale(), c.size());
    return v;
  }
  return b.sample_capped(g);
}

std::vector<std::vector<double>> drift_jacobian_on_grid(const DriftField& b, const BoxGrid& g) {
  if (!b.differentiable()) throw std::invalid_argument("drift of kind " + to_string(b.kind()) + " has no gradient");
  const int d = g.dim();
  if (b.kind() == DriftKind::grid_sampled && b.grid_params().values->grid == g) {
    auto jac = *b.grid_params().gradient;
    if (b.scale() != 1.0)
      for (auto& c : jac) simd::kernels().scale(c.data(), b.scale(), c.size());
    return jac;
  }
  std::vector<std::vector<double>> jac(static_cast<std::size_t>(d * d), std::vector<double>(g.size()));
  std::vector<double> x(static_cast<std::size_t>(d)), J(static_cast<std::size_t>(d * d));
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.point(i, x);
    b.gradient(x, J);
    for (int c = 0; c < d * d; ++c) jac[c][i] = J[c];
  }
  return jac;
}

VectorField grid_gradient(const ScalarField& f) {
  const BoxGrid& g = f.grid;
  VectorField out(g);
  if (g.boundary() == Boundary::periodic) {
    Spectral sp(g);
    for (int a = 0; a < g.dim(); ++a) sp.derivative(f.data, a, out.comp[a]);
    return out;
  }
  const int n = g.points_per_axis();
  const double inv2h = 0.5 / g.spacing();
  for (int a = 0; a < g.dim(); ++a) {
    const std::size_t st = g.stride(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const int j = g.index_along(i, a);
      const double lo = j > 0 ? f.data[i - st] : 0.0;
      const double hi = j + 1 < n ? f.data[i + st] : 0.0;
      out.comp[a][i] = (hi - lo) * inv2h;
    }
  }
  return out;
}

MatrixField gradient_outer(const ScalarField& f) {
  const VectorField gr = grid_gradient(f);
  const int d = f.grid.dim();
  MatrixField V(f.grid);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      auto& c = V.comp[V.packed_index(i, j)];
      for (std::size_t n = 0; n < f.grid.size(); ++n) c[n] = gr.comp[i][n] * gr.comp[j][n];
    }
  return V;
}

double gradient_energy(const MatrixField& V) {
  const int d = V.grid.dim();
  const auto& k = simd::kernels();
  double s = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      const auto& c = V.comp[V.packed_index(i, j)];
      s += (i == j ? 1.0 : 2.0) * k.sum_sq(c.data(), c.size());
    }
  return s * V.grid.cell_volume();
}

ScalarSeries solve_second_moment(const DriftField& b, const ScalarField& f, const SolverConfig& cfg,
                                 const StepObserver<ScalarField>& observe) {
  const BoxGrid& g = f.grid;
  const VectorField vel = drift_on_grid(b, g);
  const double bmax = max_magnitude(vel);
  const double limit = bmax > 0.0 ? g.spacing() / (2.0 * bmax) : std::numeric_limits<double>::infinity();
  std::vector<double> v0(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v0[i] = f.data[i] * f.data[i];
  return run_scalar("solve_second_moment", g, std::move(v0), &vel.comp, nullptr, nullptr, bmax, limit, cfg, observe);
}

ScalarSeries solve_dual_continuity_moment(const DriftField& b, const ScalarField& v0, const SolverConfig& cfg,
                                          const StepObserver<ScalarField>& observe) {
  const BoxGrid& g = v0.grid;
  if (!b.differentiable())
    throw std::invalid_argument("solve_dual_continuity_moment: drift of kind " + to_string(b.kind()) +
                                " has no gradient");
  const VectorField vel = drift_on_grid(b, g);
  const double bmax = max_magnitude(vel);
  // 2 div(b w) - b.grad w = div(b w) + (div b) w: one conservative flux with
  // velocity -b, then the exact factor e^{dt div_h b}, where div_h b is the
  // discrete divergence of the same face velocities.
  std::vector<std::vector<double>> negb = vel.comp;
  for (auto& c : negb)
    for (double& x : c) x = -x;
  Transport tr(g);
  const double limit_adv = bmax > 0.0 ? g.spacing() / (2.0 * bmax) : std::numeric_limits<double>::infinity();
  const double limit_pos = tr.monotone_coef_limit(negb) * g.spacing();
  const double dt = plan_steps(cfg, std::min(limit_adv, limit_pos), "solve_dual_continuity_moment").dt;
  std::vector<double> ones(g.size(), 1.0), growth(g.size(), 0.0);
  tr.conservative(growth.data(), ones.data(), negb, 1.0 / g.spacing());  // = div_h b
  for (double& x : growth) x = std::exp(dt * x);
  std::vector<double> w0(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) w0[i] = v0.data[i] * v0.data[i];
  return run_scalar("solve_dual_continuity_moment", g, std::move(w0), nullptr, &negb, bmax > 0.0 ? &growth : nullptr,
                    bmax, std::min(limit_adv, limit_pos), cfg, observe);
}

MatrixSeries solve_gradient_moment_system_q1(const DriftField& b, const ScalarField& f, const SolverConfig& cfg,
                                             const StepObserver<MatrixField>& observe) {
  return solve_gradient_moment_system_q1(b, gradient_outer(f), cfg, observe);
}

MatrixSeries solve_gradient_moment_system_q1(const DriftField& b, const MatrixField& V0, const SolverConfig& cfg,
                                             const StepObserver<MatrixField>& observe) {
  const std::string who = "solve_gradient_moment_system_q1";
  const BoxGrid& g = V0.grid;
  const int d = g.dim();
  if (!b.differentiable())
    throw std::invalid_argument(who + ": drift of kind " + to_string(b.kind()) + " has no gradient");
  const VectorField vel = drift_on_grid(b, g);
  const auto jac = drift_jacobian_on_grid(b, g);
  const double bmax = max_magnitude(vel);
  double limit = bmax > 0.0 ? g.spacing() / (2.0 * bmax) : std::numeric_limits<double>::infinity();
  // explicit coupling: keep dt * max|grad b| well inside the RK2 stability region
  double jmax = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0.0;
    for (int c = 0; c < d * d; ++c) s += std::abs(jac[c][i]);
    jmax = std::max(jmax, s);
  }
  if (jmax > 0.0) limit = std::min(limit, 0.5 / jmax);
  const StepPlan plan = plan_steps(cfg, limit, who);

  const auto& k = simd::kernels();
  Spectral sp(g);
  const auto diff = diffusion_multiplier(sp, cfg.sigma, plan.dt);
  const double decay = std::exp(-2.0 * cfg.mu * plan.dt);
  const double coef = plan.dt / g.spacing();
  Transport tr(g);
  const int nc = d * (d + 1) / 2;

  MatrixSeries out;
  out.stats.steps = plan.steps;
  out.stats.dt = plan.dt;
  out.stats.dt_limit = limit;
  out.stats.max_drift = bmax;

  MatrixField V = V0;
  if (observe) observe(0, 0.0, V);
  out.times.push_back(0.0);
  out.snapshots.push_back(V);

  // C(V)_ij = -sum_k (d_i b^k V_kj + d_j b^k V_ik), with d_i b^k = jac[k * d + i]
  auto coupling = [&](const MatrixField& src, double a, MatrixField& dst) {
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        double* y = dst.comp[MatrixField::packed_index(d, i, j)].data();
        for (int kk = 0; kk < d; ++kk) {
          k.axpyz(y, -a, jac[kk * d + i].data(), src.comp[MatrixField::packed_index(d, kk, j)].data(), g.size());
          k.axpyz(y, -a, jac[kk * d + j].data(), src.comp[MatrixField::packed_index(d, i, kk)].data(), g.size());
        }
      }
  };

  MatrixField half(g), next(g);
  for (int s = 1; s <= plan.steps; ++s) {
    if (jmax > 0.0) {
      half = V;
      coupling(V, 0.5 * plan.dt, half);
      next = V;
      coupling(half, plan.dt, next);
    } else {
      next = V;
    }
    for (int c = 0; c < nc; ++c) {
      std::vector<double>& comp = next.comp[c];
      if (bmax > 0.0) {
        std::vector<double> src = comp;
        tr.upwind(comp.data(), src.data(), vel.comp, coef);
      }
      if (decay != 1.0) k.scale(comp.data(), decay, comp.size());
      sp.apply(comp, diff);
      check_finite(comp, s, who);
    }
    std::swap(V, next);
    const double t = (s == plan.steps) ? cfg.T : s * plan.dt;
    if (observe) observe(s, t, V);
    if (should_snapshot(s, plan.steps, cfg.snapshot_stride)) {
      out.times.push_back(t);
      out.snapshots.push_back(V);
    }
  }
  return out;
}

}  // namespace fbl
