#include "fbl/grid.hpp"

#include <cmath>
#include <stdexcept>

#include "fbl/simd.hpp"

namespace fbl {

std::string to_string(Boundary b) {
  return b == Boundary::periodic ? "periodic" : "absorbing";
}

Boundary boundary_from_string(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "absorbing") return Boundary::absorbing;
  throw std::invalid_argument("unknown boundary mode '" + s + "'");
}

BoxGrid::BoxGrid(int d, double half_width, int n, Boundary boundary)
    : d_(d), L_(half_width), n_(n), boundary_(boundary) {
  if (d < 1) throw std::invalid_argument("BoxGrid: dimension must be positive");
  if (!(half_width > 0.0)) throw std::invalid_argument("BoxGrid: half-width must be positive");
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("BoxGrid: points per axis must be even and >= 2");
  strides_.assign(static_cast<std::size_t>(d), 1);
  for (int a = d - 2; a >= 0; --a) strides_[a] = strides_[a + 1] * static_cast<std::size_t>(n);
  size_ = strides_[0] * static_cast<std::size_t>(n);
}

double BoxGrid::cell_volume() const { return std::pow(spacing(), d_); }

void BoxGrid::point(std::size_t idx, std::span<double> x) const {
  for (int a = 0; a < d_; ++a) x[a] = coord(index_along(idx, a));
}

double BoxGrid::radius_sq(std::size_t idx) const {
  double r2 = 0.0;
  for (int a = 0; a < d_; ++a) {
    const double c = coord(index_along(idx, a));
    r2 += c * c;
  }
  return r2;
}

double VectorField::magnitude(std::size_t idx) const {
  double s = 0.0;
  for (const auto& c : comp) s += c[idx] * c[idx];
  return std::sqrt(s);
}

MatrixField::MatrixField(const BoxGrid& g) : grid(g) {
  const int d = g.dim();
  comp.assign(static_cast<std::size_t>(d * (d + 1) / 2), std::vector<double>(g.size(), 0.0));
}

int MatrixField::packed_index(int d, int i, int j) {
  if (i > j) std::swap(i, j);
  // rows 0..i-1 hold d, d-1, ..., d-i+1 entries
  return i * d - i * (i - 1) / 2 + (j - i);
}

double integrate(const ScalarField& f) {
  double s = 0.0;
  for (double v : f.data) s += v;
  return s * f.grid.cell_volume();
}

double lp_norm(const ScalarField& f, double p) {
  if (p == 2.0) {
    return std::sqrt(simd::kernels().sum_sq(f.data.data(), f.data.size()) * f.grid.cell_volume());
  }
  double s = 0.0;
  for (double v : f.data) s += std::pow(std::abs(v), p);
  return std::pow(s * f.grid.cell_volume(), 1.0 / p);
}

double lp_norm(const VectorField& f, double p) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.grid.size(); ++i) s += std::pow(f.magnitude(i), p);
  return std::pow(s * f.grid.cell_volume(), 1.0 / p);
}

double l2_distance_in_ball(const VectorField& a, const VectorField& b, double R) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("l2_distance_in_ball: grid mismatch");
  const double R2 = R * R;
  double s = 0.0;
  for (std::size_t i = 0; i < a.grid.size(); ++i) {
    if (a.grid.radius_sq(i) > R2) continue;
    for (std::size_t k = 0; k < a.comp.size(); ++k) {
      const double diff = a.comp[k][i] - b.comp[k][i];
      s += diff * diff;
    }
  }
  return std::sqrt(s * a.grid.cell_volume());
}

double dirichlet_energy(const ScalarField& f) {
  const BoxGrid& g = f.grid;
  const int n = g.points_per_axis();
  const double h = g.spacing();
  const bool periodic = g.boundary() == Boundary::periodic;
  double s = 0.0;
  for (int a = 0; a < g.dim(); ++a) {
    const std::size_t st = g.stride(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const int j = g.index_along(i, a);
      double next;
      if (j + 1 < n) {
        next = f.data[i + st];
      } else {
        next = periodic ? f.data[i - st * static_cast<std::size_t>(n - 1)] : 0.0;
      }
      const double diff = (next - f.data[i]) / h;
      s += diff * diff;
    }
  }
  return s * g.cell_volume();
}

double interpolate(const BoxGrid& g, std::span<const double> values, std::span<const double> x) {
  const int d = g.dim();
  const int n = g.points_per_axis();
  const double h = g.spacing();
  const bool periodic = g.boundary() == Boundary::periodic;
  int lo[8];
  double frac[8];
  if (d > 8) throw std::invalid_argument("interpolate: dimension above 8 not supported");
  for (int a = 0; a < d; ++a) {
    const double u = (x[a] + g.half_width()) / h - 0.5;
    const double fl = std::floor(u);
    lo[a] = static_cast<int>(fl);
    frac[a] = u - fl;
  }
  double result = 0.0;
  const int corners = 1 << d;
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    std::size_t idx = 0;
    bool inside = true;
    for (int a = 0; a < d; ++a) {
      const int bit = (c >> a) & 1;
      int j = lo[a] + bit;
      w *= bit ? frac[a] : 1.0 - frac[a];
      if (periodic) {
        j %= n;
        if (j < 0) j += n;
      } else if (j < 0 || j >= n) {
        inside = false;
        break;
      }
      idx += static_cast<std::size_t>(j) * g.stride(a);
    }
    if (inside && w != 0.0) result += w * values[idx];
  }
  return result;
}

}  // namespace fbl
