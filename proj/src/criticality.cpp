#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fbl/flowsim.hpp"
#include "fbl/rng.hpp"

namespace fbl {
namespace {

constexpr std::uint64_t kProbeDomain = 0x50726f62ULL;

double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1.0 - f) + v[i + 1] * f : v[i];
}

}  // namespace

nlohmann::json ProbeConfig::to_json() const {
  return {{"d", d},         {"betas", betas}, {"sigma", sigma}, {"x0", x0},           {"eps_ball", eps_ball},
          {"T", T},         {"dt0", dt0},     {"n_paths", n_paths}, {"seed", seed}};
}

std::vector<ProbeRow> criticality_probe(const ProbeConfig& cfg) {
  const int d = cfg.d;
  if (d < 3) throw std::invalid_argument("criticality_probe: d must be >= 3");
  if (static_cast<int>(cfg.x0.size()) != d) throw std::invalid_argument("criticality_probe: x0 must have length d");
  if (!(cfg.sigma > 0.0) || !(cfg.eps_ball > 0.0) || !(cfg.T > 0.0) || !(cfg.dt0 > 0.0) || cfg.n_paths < 1)
    throw std::invalid_argument("criticality_probe: sigma, eps_ball, T, dt0 and n_paths must be positive");
  const double r_cap = cfg.eps_ball / 4.0;
  const double eps2 = cfg.eps_ball * cfg.eps_ball;
  std::vector<ProbeRow> rows;
  for (std::size_t bi = 0; bi < cfg.betas.size(); ++bi) {
    const double beta = cfg.betas[bi];
    if (beta < 0.0) throw std::invalid_argument("criticality_probe: beta must be >= 0");
    const double div = beta > 0.0 ? beta : 1.0;
    std::vector<double> min_dist(static_cast<std::size_t>(cfg.n_paths));
    std::vector<char> hit(min_dist.size(), 0);
    std::vector<long> steps(min_dist.size(), 0);

#pragma omp parallel for schedule(static)
    for (int p = 0; p < cfg.n_paths; ++p) {
      auto rng = make_stream(cfg.seed, static_cast<std::uint64_t>(p), kProbeDomain + bi);
      std::normal_distribution<double> normal;
      std::vector<double> X = cfg.x0;
      double r2 = 0.0;
      for (double v : X) r2 += v * v;
      double mind = std::sqrt(r2);
      double t = 0.0;
      long n = 0;
      while (t < cfg.T) {
        const double dt = std::min({cfg.dt0, r2 * cfg.dt0 / div, cfg.T - t});
        // inward Hardy drift evaluated at max(|X|, r_cap)
        const double rr = std::max(r2, r_cap * r_cap);
        const double c = beta / (r2 >= r_cap * r_cap ? rr : std::sqrt(r2) * r_cap);
        const double sq = cfg.sigma * std::sqrt(dt);
        r2 = 0.0;
        for (int a = 0; a < d; ++a) {
          X[a] += -c * X[a] * dt + sq * normal(rng);
          r2 += X[a] * X[a];
        }
        t += dt;
        ++n;
        mind = std::min(mind, std::sqrt(r2));
        if (r2 < eps2) {
          hit[p] = 1;
          break;
        }
      }
      min_dist[p] = mind;
      steps[p] = n;
    }

    ProbeRow row;
    row.beta = beta;
    row.n = cfg.n_paths;
    for (int p = 0; p < cfg.n_paths; ++p) {
      row.hits += hit[p];
      row.steps += steps[p];
    }
    row.hit_fraction = static_cast<double>(row.hits) / static_cast<double>(row.n);
    row.stderr_ = std::sqrt(row.hit_fraction * (1.0 - row.hit_fraction) / static_cast<double>(row.n));
    std::sort(min_dist.begin(), min_dist.end());
    row.q05 = quantile_sorted(min_dist, 0.05);
    row.q50 = quantile_sorted(min_dist, 0.5);
    rows.push_back(row);
  }
  return rows;
}

double crossing_beta(const std::vector<ProbeRow>& rows, double level) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].hit_fraction >= level) {
      if (i == 0) return std::numeric_limits<double>::quiet_NaN();
      const auto& a = rows[i - 1];
      const auto& b = rows[i];
      const double w = (level - a.hit_fraction) / (b.hit_fraction - a.hit_fraction);
      return a.beta + w * (b.beta - a.beta);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace fbl
