#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fbl/grid.hpp"

namespace fbl {

/// Fourier (periodic) or sine (absorbing) diagonalization of a BoxGrid.
///
/// Multipliers are indexed by the transform coefficients and applied with the
/// normalization folded in, so apply(f, ones) is the identity up to round-off.
/// An instance owns scratch buffers: one instance per thread.
class Spectral {
public:
  explicit Spectral(const BoxGrid& grid);
  ~Spectral();
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;
  Spectral(Spectral&&) noexcept;
  Spectral& operator=(Spectral&&) noexcept;

  const BoxGrid& grid() const { return grid_; }
  std::size_t coefficient_count() const;

  /// Build a multiplier from a function of the wave vector. For periodic grids
  /// xi_a = 2 pi k_a / (2L) with signed k_a; for absorbing grids xi_a = pi (k_a+1) / (2L).
  std::vector<double> make_multiplier(const std::function<double(std::span<const double>)>& symbol) const;

  /// sum_a xi_a^2
  std::vector<double> continuous_k2() const;
  /// Symbol of the second-order finite-difference Laplacian, as a nonnegative
  /// number: sum_a (2 - 2 cos(xi_a h)) / h^2.
  std::vector<double> discrete_k2() const;

  void apply(std::span<double> field, std::span<const double> multiplier);

  /// Spectral derivative along axis (periodic only); the Nyquist mode is dropped.
  void derivative(std::span<const double> field, int axis, std::span<double> out);

private:
  void forward(std::span<const double> field);
  void backward(std::span<double> field);

  BoxGrid grid_;
  struct Plans;
  std::unique_ptr<Plans> plans_;
};

/// e^{-eps |xi|^2} with the continuous symbol (heat semigroup at time eps).
void heat_smooth_inplace(Spectral& sp, std::span<double> field, double eps);

}  // namespace fbl
