#include "fbl/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "fbl/simd.hpp"

namespace fbl {
namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

struct Spectral::Plans {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  double* real = nullptr;
  double* coeff = nullptr;  // complex interleaved (periodic) or real (absorbing)
  std::size_t n_coeff = 0;
  double norm = 1.0;
  std::vector<double> scratch;

  ~Plans() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
    if (real) fftw_free(real);
    if (coeff) fftw_free(coeff);
  }
};

Spectral::Spectral(const BoxGrid& grid) : grid_(grid), plans_(std::make_unique<Plans>()) {
  const int d = grid.dim();
  const int n = grid.points_per_axis();
  std::vector<int> dims(static_cast<std::size_t>(d), n);
  auto& p = *plans_;
  std::lock_guard<std::mutex> lock(planner_mutex());
  p.real = fftw_alloc_real(grid.size());
  if (grid.boundary() == Boundary::periodic) {
    p.n_coeff = grid.size() / static_cast<std::size_t>(n) * static_cast<std::size_t>(n / 2 + 1);
    p.coeff = reinterpret_cast<double*>(fftw_alloc_complex(p.n_coeff));
    p.fwd = fftw_plan_dft_r2c(d, dims.data(), p.real, reinterpret_cast<fftw_complex*>(p.coeff), FFTW_ESTIMATE);
    p.bwd = fftw_plan_dft_c2r(d, dims.data(), reinterpret_cast<fftw_complex*>(p.coeff), p.real, FFTW_ESTIMATE);
    p.norm = 1.0 / static_cast<double>(grid.size());
  } else {
    p.n_coeff = grid.size();
    p.coeff = fftw_alloc_real(p.n_coeff);
    std::vector<fftw_r2r_kind> kf(static_cast<std::size_t>(d), FFTW_RODFT10);
    std::vector<fftw_r2r_kind> kb(static_cast<std::size_t>(d), FFTW_RODFT01);
    p.fwd = fftw_plan_r2r(d, dims.data(), p.real, p.coeff, kf.data(), FFTW_ESTIMATE);
    p.bwd = fftw_plan_r2r(d, dims.data(), p.coeff, p.real, kb.data(), FFTW_ESTIMATE);
    p.norm = 1.0 / (static_cast<double>(grid.size()) * std::pow(2.0, d));
  }
  if (!p.fwd || !p.bwd) throw std::runtime_error("Spectral: FFTW planning failed");
}

Spectral::~Spectral() = default;
Spectral::Spectral(Spectral&&) noexcept = default;
Spectral& Spectral::operator=(Spectral&&) noexcept = default;

std::size_t Spectral::coefficient_count() const { return plans_->n_coeff; }

std::vector<double> Spectral::make_multiplier(
    const std::function<double(std::span<const double>)>& symbol) const {
  const int d = grid_.dim();
  const int n = grid_.points_per_axis();
  const double L = grid_.half_width();
  const bool periodic = grid_.boundary() == Boundary::periodic;
  const int last = periodic ? n / 2 + 1 : n;
  std::vector<double> mult(plans_->n_coeff);
  std::vector<double> xi(static_cast<std::size_t>(d));
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  for (std::size_t c = 0; c < plans_->n_coeff; ++c) {
    std::size_t rem = c;
    for (int a = d - 1; a >= 0; --a) {
      const int extent = (a == d - 1) ? last : n;
      idx[a] = static_cast<int>(rem % static_cast<std::size_t>(extent));
      rem /= static_cast<std::size_t>(extent);
    }
    for (int a = 0; a < d; ++a) {
      if (periodic) {
        const int k = idx[a] <= n / 2 ? idx[a] : idx[a] - n;
        xi[a] = std::numbers::pi * k / L;
      } else {
        xi[a] = std::numbers::pi * (idx[a] + 1) / (2.0 * L);
      }
    }
    mult[c] = symbol(xi);
  }
  return mult;
}

std::vector<double> Spectral::continuous_k2() const {
  return make_multiplier([](std::span<const double> xi) {
    double s = 0.0;
    for (double x : xi) s += x * x;
    return s;
  });
}

std::vector<double> Spectral::discrete_k2() const {
  const double h = grid_.spacing();
  return make_multiplier([h](std::span<const double> xi) {
    double s = 0.0;
    for (double x : xi) s += (2.0 - 2.0 * std::cos(x * h)) / (h * h);
    return s;
  });
}

void Spectral::forward(std::span<const double> field) {
  auto& p = *plans_;
  std::copy(field.begin(), field.end(), p.real);
  fftw_execute(p.fwd);
}

void Spectral::backward(std::span<double> field) {
  auto& p = *plans_;
  fftw_execute(p.bwd);
  std::copy(p.real, p.real + grid_.size(), field.begin());
}

void Spectral::apply(std::span<double> field, std::span<const double> multiplier) {
  auto& p = *plans_;
  if (field.size() != grid_.size() || multiplier.size() != p.n_coeff)
    throw std::invalid_argument("Spectral::apply: size mismatch");
  forward(field);
  const auto& k = simd::kernels();
  if (grid_.boundary() == Boundary::periodic) {
    k.scale_complex(p.coeff, multiplier.data(), p.n_coeff);
  } else {
    for (std::size_t c = 0; c < p.n_coeff; ++c) p.coeff[c] *= multiplier[c];
  }
  backward(field);
  k.scale(field.data(), p.norm, field.size());
}

void Spectral::derivative(std::span<const double> field, int axis, std::span<double> out) {
  if (grid_.boundary() != Boundary::periodic)
    throw std::invalid_argument("Spectral::derivative requires a periodic grid");
  auto& p = *plans_;
  const int d = grid_.dim();
  const int n = grid_.points_per_axis();
  const double L = grid_.half_width();
  const int last = n / 2 + 1;
  forward(field);
  for (std::size_t c = 0; c < p.n_coeff; ++c) {
    // index along `axis` in the r2c layout
    int ia;
    if (axis == d - 1) {
      ia = static_cast<int>(c % static_cast<std::size_t>(last));
    } else {
      std::size_t st = static_cast<std::size_t>(last);
      for (int a = d - 2; a > axis; --a) st *= static_cast<std::size_t>(n);
      ia = static_cast<int>((c / st) % static_cast<std::size_t>(n));
    }
    const int k = ia <= n / 2 ? ia : ia - n;
    const double xi = (ia == n / 2) ? 0.0 : std::numbers::pi * k / L;
    const double re = p.coeff[2 * c];
    const double im = p.coeff[2 * c + 1];
    // (i xi) * (re + i im)
    p.coeff[2 * c] = -xi * im;
    p.coeff[2 * c + 1] = xi * re;
  }
  backward(out);
  simd::kernels().scale(out.data(), p.norm, out.size());
}

void heat_smooth_inplace(Spectral& sp, std::span<double> field, double eps) {
  if (sp.grid().boundary() != Boundary::periodic)
    throw std::invalid_argument("heat smoothing requires a periodic grid");
  auto k2 = sp.continuous_k2();
  for (double& m : k2) m = std::exp(-eps * m);
  sp.apply(field, k2);
}

}  // namespace fbl
