#include "fbl/regularize.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fbl/gridio.hpp"
#include "fbl/spectral.hpp"

namespace fbl {
namespace {

std::vector<double> eta_samples(const BoxGrid& g, double m) {
  std::vector<double> eta(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) eta[i] = cutoff_eta(std::sqrt(g.radius_sq(i)), m);
  return eta;
}

void require_cover(const BoxGrid& g, int m) {
  if (g.half_width() < m + 1.0)
    throw std::invalid_argument("grid half-width " + std::to_string(g.half_width()) + " does not cover B(0, " +
                                std::to_string(m + 1) + ")");
}

// eta * e^{eps Delta} T, reusing one Spectral instance.
VectorField smoothed_cut(Spectral& sp, const VectorField& t, const std::vector<double>& eta, double eps) {
  VectorField out = t;
  auto mult = sp.continuous_k2();
  for (double& v : mult) v = std::exp(-eps * v);
  for (auto& c : out.comp) {
    sp.apply(c, mult);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= eta[i];
  }
  return out;
}

}  // namespace

VectorField truncate_drift(const DriftField& b, int m, const BoxGrid& grid) {
  if (m < 1) throw std::invalid_argument("truncate_drift: m must be >= 1");
  if (grid.dim() != b.dimension()) throw std::invalid_argument("truncate_drift: dimension mismatch");
  require_cover(grid, m);
  const auto d = static_cast<std::size_t>(grid.dim());
  VectorField out(grid);
  std::vector<double> x(d), v(d);
  const double m2 = static_cast<double>(m) * m;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.radius_sq(i) > m2) continue;
    grid.point(i, x);
    b.eval(x, v);
    double s = 0.0;
    for (double c : v) s += c * c;
    if (!(s <= m2)) continue;  // also drops inf / nan
    for (std::size_t k = 0; k < d; ++k) out.comp[k][i] = v[k];
  }
  return out;
}

VectorField heat_smooth(const VectorField& field, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("heat_smooth: eps must be positive");
  Spectral sp(field.grid);
  VectorField out = field;
  for (auto& c : out.comp) heat_smooth_inplace(sp, c, eps);
  return out;
}

double cutoff_eta(double r, double m) {
  if (r <= m) return 1.0;
  if (r >= m + 1.0) return 0.0;
  const double t = r - m;
  return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

double cutoff_eta_slope(double r, double m) {
  if (r <= m || r >= m + 1.0) return 0.0;
  const double t = r - m;
  return -30.0 * t * t * (1.0 - t) * (1.0 - t);
}

double talenti_sobolev_constant(int d) {
  if (d < 3) throw std::invalid_argument("Sobolev constant needs d >= 3");
  const double pi = std::numbers::pi;
  return std::pow(pi * d * (d - 2.0), -0.5) * std::pow(std::tgamma(d) / std::tgamma(0.5 * d), 1.0 / d);
}

double ld_distance(const VectorField& a, const VectorField& b, double p) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("ld_distance: grid mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.grid.size(); ++i) {
    double e = 0.0;
    for (std::size_t k = 0; k < a.comp.size(); ++k) {
      const double t = a.comp[k][i] - b.comp[k][i];
      e += t * t;
    }
    s += std::pow(e, 0.5 * p);
  }
  return std::pow(s * a.grid.cell_volume(), 1.0 / p);
}

EpsilonChoice choose_epsilon(const VectorField& truncated, int m, double gamma, double c_sob, int k_max) {
  if (!(gamma > 0.0)) throw std::invalid_argument("choose_epsilon: gamma must be positive");
  if (!(c_sob > 0.0)) throw std::invalid_argument("choose_epsilon: c_sob must be positive");
  const BoxGrid& g = truncated.grid;
  Spectral sp(g);
  const auto eta = eta_samples(g, m);
  const double d = g.dim();
  EpsilonChoice ch;
  ch.threshold = gamma / c_sob;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= k_max; ++k) {
    const double eps = std::ldexp(1.0, -k);
    const VectorField sm = smoothed_cut(sp, truncated, eta, eps);
    const double defect = ld_distance(sm, truncated, d);
    best = std::min(best, defect);
    if (defect <= ch.threshold) {
      ch.epsilon = eps;
      ch.exponent = k;
      ch.defect = defect;
      return ch;
    }
  }
  throw std::runtime_error("choose_epsilon: no eps >= 2^-" + std::to_string(k_max) +
                           " meets the L^d defect bound " + std::to_string(ch.threshold) +
                           "; smallest achieved defect " + std::to_string(best));
}

EpsilonChoice choose_epsilon(const DriftField& b, int m, double gamma, double c_sob, const BoxGrid& grid,
                             int k_max) {
  return choose_epsilon(truncate_drift(b, m, grid), m, gamma, c_sob, k_max);
}

FormBoundCertificate MollifiedDrift::certificate() const {
  FormBoundCertificate c;
  c.delta = delta_m;
  c.lambda = lambda;
  c.c_delta = lambda * delta_m;
  c.method = CertMethod::sum;
  c.provenance = "mollified member m=" + std::to_string(m) + ": (sqrt(delta)+sqrt(gamma_m))^2";
  return c;
}

nlohmann::json MollifiedDrift::meta() const {
  return {{"m", m},
          {"epsilon", epsilon},
          {"gamma", gamma},
          {"delta", delta},
          {"delta_m", delta_m},
          {"lambda", lambda},
          {"c_sob", c_sob},
          {"cutoff_radius", radius},
          {"ld_defect", ld_defect},
          {"ld_threshold", ld_threshold},
          {"test_radius", test_radius},
          {"l2_distance", l2_distance}};
}

MollifiedDrift mollify(const DriftField& b, double delta, int m, double gamma, const BoxGrid& grid,
                       const MollifyOptions& opt) {
  if (grid.boundary() != Boundary::periodic) throw std::invalid_argument("mollify: requires a periodic grid");
  if (!(delta >= 0.0)) throw std::invalid_argument("mollify: delta must be >= 0");
  const int d = grid.dim();
  MollifiedDrift md;
  md.m = m;
  md.gamma = gamma;
  md.delta = delta;
  md.delta_m = std::pow(std::sqrt(delta) + std::sqrt(gamma), 2);
  md.lambda = opt.lambda;
  md.c_sob = opt.c_sob > 0.0 ? opt.c_sob : talenti_sobolev_constant(d);
  md.radius = m;
  md.test_radius = opt.test_radius;

  const VectorField t = truncate_drift(b, m, grid);
  const EpsilonChoice ch = choose_epsilon(t, m, gamma, md.c_sob, opt.k_max);
  md.epsilon = ch.epsilon;
  md.ld_defect = ch.defect;
  md.ld_threshold = ch.threshold;

  // b_m = eta g with g = e^{eps Delta} T; grad b_m = eta grad g + g (x eta'(r)/r)^T
  Spectral sp(grid);
  VectorField g = t;
  auto mult = sp.continuous_k2();
  for (double& v : mult) v = std::exp(-ch.epsilon * v);
  for (auto& c : g.comp) sp.apply(c, mult);

  auto values = std::make_shared<VectorField>(grid);
  auto grad = std::make_shared<std::vector<std::vector<double>>>(static_cast<std::size_t>(d * d),
                                                                 std::vector<double>(grid.size()));
  std::vector<double> deriv(grid.size());
  std::vector<double> x(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) {
    for (int k = 0; k < d; ++k) {
      sp.derivative(g.comp[a], k, deriv);
      auto& out = (*grad)[a * d + k];
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const double r = std::sqrt(grid.radius_sq(i));
        const double eta = cutoff_eta(r, m);
        const double slope = cutoff_eta_slope(r, m);
        out[i] = eta * deriv[i];
        if (slope != 0.0) out[i] += g.comp[a][i] * slope * grid.coord(grid.index_along(i, k)) / r;
      }
    }
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double eta = cutoff_eta(std::sqrt(grid.radius_sq(i)), m);
    for (int a = 0; a < d; ++a) values->comp[a][i] = eta * g.comp[a][i];
  }
  md.l2_distance = l2_distance_in_ball(*values, b.sample_capped(grid), opt.test_radius);
  md.field = DriftField::grid_sampled(std::shared_ptr<const VectorField>(values),
                                      std::shared_ptr<const std::vector<std::vector<double>>>(grad));
  return md;
}

std::vector<MollifiedDrift> build_mollified_sequence(const DriftField& b, double delta,
                                                     std::span<const double> schedule, const BoxGrid& grid,
                                                     const MollifyOptions& opt) {
  if (schedule.empty()) throw std::invalid_argument("build_mollified_sequence: empty schedule");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i] > 0.0)) throw std::invalid_argument("build_mollified_sequence: schedule must be positive");
    if (i > 0 && !(schedule[i] < schedule[i - 1]))
      throw std::invalid_argument("build_mollified_sequence: schedule must be strictly decreasing");
  }
  std::vector<MollifiedDrift> seq;
  seq.reserve(schedule.size());
  for (std::size_t i = 0; i < schedule.size(); ++i)
    seq.push_back(mollify(b, delta, static_cast<int>(i + 1), schedule[i], grid, opt));
  return seq;
}

void write_mollified_drift(const std::string& path, const MollifiedDrift& md) {
  const auto& v = *md.field.grid_params().values;
  write_grid_file(path, v, md.meta());
}

}  // namespace fbl
