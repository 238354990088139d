#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "fbl/drift.hpp"
#include "fbl/simd.hpp"
#include "fbl/spectral.hpp"

namespace fbl {
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

FormBoundCertificate make_cert(double sqrt_delta, double lambda, CertMethod m, std::string prov) {
  FormBoundCertificate c;
  c.delta = sqrt_delta * sqrt_delta;
  c.lambda = lambda;
  c.c_delta = lambda * c.delta;
  c.method = m;
  c.provenance = std::move(prov);
  return c;
}

// Number of entries of a sorted array strictly greater than s.
std::size_t count_above(const std::vector<double>& sorted, double s) {
  return static_cast<std::size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), s));
}

// A super-level set must cover at least this many cells to count as resolved.
constexpr std::size_t kMinCells = 512;

}  // namespace

std::string to_string(CertMethod m) {
  switch (m) {
    case CertMethod::hardy_analytic: return "hardy_analytic";
    case CertMethod::strichartz: return "strichartz";
    case CertMethod::ld_split: return "ld_split";
    case CertMethod::sum: return "sum";
    case CertMethod::numeric_estimate: return "numeric_estimate";
  }
  return "?";
}

double FormBoundCertificate::sqrt_delta() const { return std::sqrt(delta); }

nlohmann::json FormBoundCertificate::to_json() const {
  return {{"delta", delta},
          {"sqrt_delta", sqrt_delta()},
          {"c_delta", c_delta},
          {"lambda", lambda},
          {"method", to_string(method)},
          {"provenance", provenance}};
}

FormBoundCertificate hardy_certificate(int d, double beta) {
  if (d < 3) throw std::invalid_argument("hardy_certificate: d must be >= 3");
  if (!(beta > 0.0)) throw std::invalid_argument("hardy_certificate: beta must be positive");
  return make_cert(2.0 * beta / (d - 2), 0.0, CertMethod::hardy_analytic,
                   "Hardy inequality, sqrt(delta) = 2 beta/(d-2), beta=" + fmt(beta));
}

FormBoundCertificate strichartz_certificate(int d, double weak_norm) {
  if (d < 3) throw std::invalid_argument("strichartz_certificate: d must be >= 3");
  if (!(weak_norm >= 0.0)) throw std::invalid_argument("strichartz_certificate: weak norm must be >= 0");
  const double s = weak_norm * std::pow(unit_ball_volume(d), -1.0 / d) * 2.0 / (d - 2);
  return make_cert(s, 0.0, CertMethod::strichartz,
                   "Strichartz bound from weak L^d norm " + fmt(weak_norm) + ", unit-ball volume");
}

FormBoundCertificate ld_split_certificate(int d, double ld_norm, double linf_norm, double lambda, double c_sob) {
  if (d < 3) throw std::invalid_argument("ld_split_certificate: d must be >= 3");
  if (ld_norm < 0.0 || linf_norm < 0.0 || c_sob <= 0.0)
    throw std::invalid_argument("ld_split_certificate: norms must be >= 0 and c_sob > 0");
  if (linf_norm > 0.0 && !(lambda > 0.0))
    throw std::invalid_argument("ld_split_certificate: bounded part needs lambda > 0");
  const double s = c_sob * ld_norm + (linf_norm > 0.0 ? linf_norm / std::sqrt(lambda) : 0.0);
  return make_cert(s, lambda, CertMethod::ld_split,
                   "L^d + L^inf split, c_sob=" + fmt(c_sob) + ", ||f||_d=" + fmt(ld_norm) +
                       ", ||h||_inf=" + fmt(linf_norm));
}

FormBoundCertificate certificate_sum(const FormBoundCertificate& a, const FormBoundCertificate& b) {
  FormBoundCertificate c;
  const double s = a.sqrt_delta() + b.sqrt_delta();
  c.delta = s * s;
  c.c_delta = 2.0 * (a.c_delta + b.c_delta);
  c.lambda = c.delta > 0.0 ? c.c_delta / c.delta : 0.0;
  c.method = CertMethod::sum;
  c.provenance = "sum: sqrt(delta) added, c_delta = 2(c1 + c2); [" + a.provenance + "] + [" + b.provenance + "]";
  return c;
}

FormBoundCertificate certificate_scaled(const FormBoundCertificate& c, double factor) {
  FormBoundCertificate r = c;
  r.delta = c.delta * factor * factor;
  r.c_delta = c.c_delta * factor * factor;
  r.provenance = c.provenance + "; scaled by " + fmt(factor);
  return r;
}

// Weak-norm estimate from fine samples and a 2x-coarser companion sampling.
static WeakLdEstimate weak_ld_from(std::span<const double> magnitude, std::vector<double> coarse, double cv_coarse,
                                   const BoxGrid& grid, int s_samples) {
  if (s_samples < 2) throw std::invalid_argument("weak_ld_norm: need at least 2 s samples");
  const int d = grid.dim();
  WeakLdEstimate est;
  est.grid = grid;
  est.s_samples = s_samples;

  std::vector<double> fine(magnitude.begin(), magnitude.end());
  std::sort(fine.begin(), fine.end());
  std::sort(coarse.begin(), coarse.end());

  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double v : fine) {
    if (!std::isfinite(v)) continue;
    if (v > 0.0) lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > 0.0)) {
    // zero field, or all mass on the singular set
    const bool any_inf = std::isinf(fine.back());
    est.stable = !any_inf;
    return est;
  }
  lo *= 0.5;
  const double cv_fine = grid.cell_volume();
  bool have = false;
  double best_any = 0.0, best_any_s = 0.0;
  for (int k = 0; k < s_samples; ++k) {
    const double s = (hi == lo) ? hi : lo * std::pow(hi / lo, static_cast<double>(k) / (s_samples - 1));
    const double vol_f = static_cast<double>(count_above(fine, s)) * cv_fine;
    const double vol_c = static_cast<double>(count_above(coarse, s)) * cv_coarse;
    const double val = s * std::pow(vol_f, 1.0 / d);
    if (val > best_any) {
      best_any = val;
      best_any_s = s;
    }
    const bool resolved = count_above(fine, s) >= kMinCells && std::abs(vol_c - vol_f) <= 0.1 * vol_f;
    if (!resolved) continue;
    ++est.resolved_samples;
    if (!have || val > est.value) {
      est.value = val;
      est.maximizing_s = s;
      have = true;
    }
  }
  if (!have) {
    est.value = best_any;
    est.maximizing_s = best_any_s;
    est.stable = false;
  }
  return est;
}

WeakLdEstimate weak_ld_norm_samples(std::span<const double> magnitude, const BoxGrid& grid, int s_samples) {
  if (magnitude.size() != grid.size()) throw std::invalid_argument("weak_ld_norm: size mismatch");
  // companion: mean magnitude over 2^d blocks
  const int d = grid.dim();
  const int nc = grid.points_per_axis() / 2;
  std::size_t ncoarse = 1;
  for (int a = 0; a < d; ++a) ncoarse *= static_cast<std::size_t>(nc);
  std::vector<double> coarse(ncoarse, 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::size_t c = 0;
    for (int a = 0; a < d; ++a) c = c * static_cast<std::size_t>(nc) + static_cast<std::size_t>(grid.index_along(i, a) / 2);
    coarse[c] += magnitude[i] / std::pow(2.0, d);
  }
  return weak_ld_from(magnitude, std::move(coarse), grid.cell_volume() * std::pow(2.0, d), grid, s_samples);
}

WeakLdEstimate weak_ld_norm(const DriftField& field, const BoxGrid& grid, int s_samples) {
  if (grid.dim() != field.dimension()) throw std::invalid_argument("weak_ld_norm: dimension mismatch");
  auto sample = [&](const BoxGrid& g) {
    std::vector<double> mag(g.size());
    std::vector<double> x(static_cast<std::size_t>(g.dim()));
    for (std::size_t i = 0; i < g.size(); ++i) {
      g.point(i, x);
      mag[i] = field.magnitude(x);
    }
    return mag;
  };
  const BoxGrid coarse_grid(grid.dim(), grid.half_width(), std::max(2, grid.points_per_axis() / 2 + (grid.points_per_axis() / 2) % 2),
                            grid.boundary());
  const auto fine = sample(grid);
  return weak_ld_from(fine, sample(coarse_grid), coarse_grid.cell_volume(), grid, s_samples);
}

FormBoundEstimate estimate_form_bound_samples(std::span<const double> b_squared, double lambda, const BoxGrid& grid,
                                              int iters, double tol) {
  if (grid.boundary() != Boundary::periodic)
    throw std::invalid_argument("estimate_form_bound: requires a periodic grid");
  if (!(lambda > 0.0)) throw std::invalid_argument("estimate_form_bound: lambda must be > 0 on a periodic box");
  if (b_squared.size() != grid.size()) throw std::invalid_argument("estimate_form_bound: size mismatch");
  Spectral sp(grid);
  const auto resolvent_half =
      sp.make_multiplier([lambda](std::span<const double> xi) {
        double s = lambda;
        for (double v : xi) s += v * v;
        return 1.0 / std::sqrt(s);
      });
  const auto& k = simd::kernels();
  FormBoundEstimate out;
  const std::size_t N = grid.size();
  double bmax = 0.0;
  for (double v : b_squared) bmax = std::max(bmax, v);
  if (bmax == 0.0) {
    out.converged = true;
    return out;
  }
  std::vector<double> v(N), w(N);
  for (std::size_t i = 0; i < N; ++i) v[i] = std::sqrt(b_squared[i]) + 1e-3 * std::sqrt(bmax);
  double nv = std::sqrt(k.sum_sq(v.data(), N));
  k.scale(v.data(), 1.0 / nv, N);
  double prev = 0.0;
  for (int it = 1; it <= iters; ++it) {
    w = v;
    sp.apply(w, resolvent_half);
    for (std::size_t i = 0; i < N; ++i) w[i] *= b_squared[i];
    sp.apply(w, resolvent_half);
    double rq = 0.0;
    for (std::size_t i = 0; i < N; ++i) rq += v[i] * w[i];
    out.delta_est = rq;
    out.iterations = it;
    out.residual = std::abs(rq - prev) / std::max(std::abs(rq), std::numeric_limits<double>::min());
    if (it > 1 && out.residual <= tol) {
      out.converged = true;
      break;
    }
    prev = rq;
    const double nw = std::sqrt(k.sum_sq(w.data(), N));
    if (nw == 0.0) {
      out.converged = true;
      break;
    }
    for (std::size_t i = 0; i < N; ++i) v[i] = w[i] / nw;
  }
  return out;
}

FormBoundEstimate estimate_form_bound_numeric(const DriftField& field, double lambda, const BoxGrid& grid, int iters,
                                              double tol) {
  const VectorField s = field.sample_capped(grid);
  std::vector<double> b2(grid.size(), 0.0);
  for (int a = 0; a < grid.dim(); ++a)
    for (std::size_t i = 0; i < grid.size(); ++i) b2[i] += s.comp[a][i] * s.comp[a][i];
  return estimate_form_bound_samples(b2, lambda, grid, iters, tol);
}

}  // namespace fbl
