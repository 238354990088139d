#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fbl {

enum class Boundary { periodic, absorbing };

std::string to_string(Boundary b);
Boundary boundary_from_string(const std::string& s);

/// Uniform cell-centred grid on the box [-L, L]^d with n points per axis.
/// Node j sits at -L + (j + 1/2) h, so for even n the origin is never a node.
/// Storage is row-major: the last axis is contiguous.
class BoxGrid {
public:
  BoxGrid() = default;
  BoxGrid(int d, double half_width, int n, Boundary boundary = Boundary::periodic);

  int dim() const { return d_; }
  double half_width() const { return L_; }
  int points_per_axis() const { return n_; }
  Boundary boundary() const { return boundary_; }
  double spacing() const { return 2.0 * L_ / n_; }
  double cell_volume() const;
  std::size_t size() const { return size_; }
  std::size_t stride(int axis) const { return strides_[axis]; }

  double coord(int j) const { return -L_ + (j + 0.5) * spacing(); }
  /// Axis index of flat index idx.
  int index_along(std::size_t idx, int axis) const {
    return static_cast<int>((idx / strides_[axis]) % static_cast<std::size_t>(n_));
  }
  void point(std::size_t idx, std::span<double> x) const;
  double radius_sq(std::size_t idx) const;

  /// Smallest radius such that the ball B(0, r) fits inside the box.
  double inscribed_radius() const { return L_; }

  bool operator==(const BoxGrid& o) const {
    return d_ == o.d_ && L_ == o.L_ && n_ == o.n_ && boundary_ == o.boundary_;
  }

private:
  int d_ = 3;
  double L_ = 1.0;
  int n_ = 2;
  Boundary boundary_ = Boundary::periodic;
  std::size_t size_ = 8;
  std::vector<std::size_t> strides_{4, 2, 1};
};

struct ScalarField {
  BoxGrid grid;
  std::vector<double> data;

  ScalarField() = default;
  explicit ScalarField(const BoxGrid& g, double value = 0.0) : grid(g), data(g.size(), value) {}

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  std::size_t size() const { return data.size(); }
};

/// d components, each a full scalar grid.
struct VectorField {
  BoxGrid grid;
  std::vector<std::vector<double>> comp;

  VectorField() = default;
  explicit VectorField(const BoxGrid& g)
      : grid(g), comp(static_cast<std::size_t>(g.dim()), std::vector<double>(g.size(), 0.0)) {}

  double magnitude(std::size_t idx) const;
};

/// Symmetric d x d field stored as the upper triangle (i <= j), d(d+1)/2 components.
struct MatrixField {
  BoxGrid grid;
  std::vector<std::vector<double>> comp;

  MatrixField() = default;
  explicit MatrixField(const BoxGrid& g);

  static int packed_index(int d, int i, int j);
  int packed_index(int i, int j) const { return packed_index(grid.dim(), i, j); }
  double at(int i, int j, std::size_t idx) const { return comp[packed_index(i, j)][idx]; }
};

/// Discrete integrals with the midpoint rule on the cell-centred grid.
double integrate(const ScalarField& f);
double lp_norm(const ScalarField& f, double p);
double lp_norm(const VectorField& f, double p);
/// L^2 distance of two vector fields restricted to the ball B(0, R).
double l2_distance_in_ball(const VectorField& a, const VectorField& b, double R);

/// Forward-difference gradient energy sum_k ||D_k^+ f||_2^2 (periodic wrap, or
/// zero ghost values for absorbing boundaries).
double dirichlet_energy(const ScalarField& f);

/// Multilinear interpolation of a grid-sampled component at an arbitrary point.
/// Periodic grids wrap; absorbing grids treat outside values as zero.
double interpolate(const BoxGrid& g, std::span<const double> values, std::span<const double> x);

}  // namespace fbl
