#include <algorithm>

#include "fbl/simd.hpp"

namespace fbl::simd {
namespace {

inline double pos(double v) { return v > 0.0 ? v : 0.0; }
inline double neg(double v) { return v < 0.0 ? v : 0.0; }

void upwind_row_ref(double* out, const double* cur, const double* prev, const double* next,
                    const double* vel, double coef, std::size_t len) {
  for (std::size_t k = 0; k < len; ++k) {
    const double back = cur[k] - prev[k];
    const double fwd = next[k] - cur[k];
    const double rate = pos(vel[k]) * back + neg(vel[k]) * fwd;
    out[k] -= coef * rate;
  }
}

void face_flux_row_ref(double* flux, const double* cur, const double* next, const double* vel_cur,
                       const double* vel_next, std::size_t len) {
  for (std::size_t k = 0; k < len; ++k) {
    const double af = 0.5 * (vel_cur[k] + vel_next[k]);
    flux[k] = pos(af) * cur[k] + neg(af) * next[k];
  }
}

void flux_diff_row_ref(double* out, const double* flux, const double* flux_prev, double coef,
                       std::size_t len) {
  for (std::size_t k = 0; k < len; ++k) out[k] -= coef * (flux[k] - flux_prev[k]);
}

void axpyz_ref(double* y, double a, const double* x, const double* z, std::size_t len) {
  for (std::size_t k = 0; k < len; ++k) y[k] += a * (x[k] * z[k]);
}

void scale_ref(double* x, double a, std::size_t len) {
  for (std::size_t k = 0; k < len; ++k) x[k] *= a;
}

void scale_complex_ref(double* c, const double* mult, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    c[2 * k] *= mult[k];
    c[2 * k + 1] *= mult[k];
  }
}

double sum_sq_ref(const double* x, std::size_t len) {
  double s = 0.0;
  for (std::size_t k = 0; k < len; ++k) s += x[k] * x[k];
  return s;
}

double weighted_sum_sq_ref(const double* x, const double* w, std::size_t len) {
  double s = 0.0;
  for (std::size_t k = 0; k < len; ++k) s += w[k] * (x[k] * x[k]);
  return s;
}

double clip_negative_ref(double* x, std::size_t len, double* min_out) {
  double removed = 0.0;
  double lo = len ? x[0] : 0.0;
  for (std::size_t k = 0; k < len; ++k) {
    lo = std::min(lo, x[k]);
    if (x[k] < 0.0) {
      removed -= x[k];
      x[k] = 0.0;
    }
  }
  if (min_out) *min_out = lo;
  return removed;
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::scalar,      upwind_row_ref, face_flux_row_ref,
                                 flux_diff_row_ref, axpyz_ref,      scale_ref,
                                 scale_complex_ref, sum_sq_ref,     weighted_sum_sq_ref,
                                 clip_negative_ref};
  return table;
}

}  // namespace fbl::simd
