#include <immintrin.h>

#include <algorithm>

#include "fbl/simd.hpp"

namespace fbl::simd {
namespace {

void upwind_row_avx2(double* out, const double* cur, const double* prev, const double* next,
                     const double* vel, double coef, std::size_t len) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d c = _mm256_set1_pd(coef);
  std::size_t k = 0;
  for (; k + 4 <= len; k += 4) {
    const __m256d vc = _mm256_loadu_pd(cur + k);
    const __m256d back = _mm256_sub_pd(vc, _mm256_loadu_pd(prev + k));
    const __m256d fwd = _mm256_sub_pd(_mm256_loadu_pd(next + k), vc);
    const __m256d v = _mm256_loadu_pd(vel + k);
    const __m256d rate = _mm256_add_pd(_mm256_mul_pd(_mm256_max_pd(v, zero), back),
                                       _mm256_mul_pd(_mm256_min_pd(v, zero), fwd));
    _mm256_storeu_pd(out + k, _mm256_sub_pd(_mm256_loadu_pd(out + k), _mm256_mul_pd(c, rate)));
  }
  if (k < len) scalar_kernels().upwind_row(out + k, cur + k, prev + k, next + k, vel + k, coef, len - k);
}

void face_flux_row_avx2(double* flux, const double* cur, const double* next, const double* vel_cur,
                        const double* vel_next, std::size_t len) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d half = _mm256_set1_pd(0.5);
  std::size_t k = 0;
  for (; k + 4 <= len; k += 4) {
    const __m256d af =
        _mm256_mul_pd(half, _mm256_add_pd(_mm256_loadu_pd(vel_cur + k), _mm256_loadu_pd(vel_next + k)));
    const __m256d f = _mm256_add_pd(_mm256_mul_pd(_mm256_max_pd(af, zero), _mm256_loadu_pd(cur + k)),
                                    _mm256_mul_pd(_mm256_min_pd(af, zero), _mm256_loadu_pd(next + k)));
    _mm256_storeu_pd(flux + k, f);
  }
  if (k < len) scalar_kernels().face_flux_row(flux + k, cur + k, next + k, vel_cur + k, vel_next + k, len - k);
}

void flux_diff_row_avx2(double* out, const double* flux, const double* flux_prev, double coef,
                        std::size_t len) {
  const __m256d c = _mm256_set1_pd(coef);
  std::size_t k = 0;
  for (; k + 4 <= len; k += 4) {
    const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(flux + k), _mm256_loadu_pd(flux_prev + k));
    _mm256_storeu_pd(out + k, _mm256_sub_pd(_mm256_loadu_pd(out + k), _mm256_mul_pd(c, diff)));
  }
  if (k < len) scalar_kernels().flux_diff_row(out + k, flux + k, flux_prev + k, coef, len - k);
}

void axpyz_avx2(double* y, double a, const double* x, const double* z, std::size_t len) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t k = 0;
  for (; k + 4 <= len; k += 4) {
    const __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(x + k), _mm256_loadu_pd(z + k));
    _mm256_storeu_pd(y + k, _mm256_add_pd(_mm256_loadu_pd(y + k), _mm256_mul_pd(va, prod)));
  }
  if (k < len) scalar_kernels().axpyz(y + k, a, x + k, z + k, len - k);
}

void scale_avx2(double* x, double a, std::size_t len) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t k = 0;
  for (; k + 4 <= len; k += 4) _mm256_storeu_pd(x + k, _mm256_mul_pd(_mm256_loadu_pd(x + k), va));
  if (k < len) scalar_kernels().scale(x + k, a, len - k);
}

void scale_complex_avx2(double* c, const double* mult, std::size_t n) {
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    // [m0 m0 m1 m1]
    const __m256d m = _mm256_set_pd(mult[k + 1], mult[k + 1], mult[k], mult[k]);
    _mm256_storeu_pd(c + 2 * k, _mm256_mul_pd(_mm256_loadu_pd(c + 2 * k), m));
  }
  if (k < n) scalar_kernels().scale_complex(c + 2 * k, mult + k, n - k);
}

double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double sum_sq_avx2(const double* x, std::size_t len) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= len; k += 4) {
    const __m256d v = _mm256_loadu_pd(x + k);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(v, v));
  }
  double s = hsum(acc);
  for (; k < len; ++k) s += x[k] * x[k];
  return s;
}

double weighted_sum_sq_avx2(const double* x, const double* w, std::size_t len) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= len; k += 4) {
    const __m256d v = _mm256_loadu_pd(x + k);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(w + k), _mm256_mul_pd(v, v)));
  }
  double s = hsum(acc);
  for (; k < len; ++k) s += w[k] * (x[k] * x[k]);
  return s;
}

double clip_negative_avx2(double* x, std::size_t len, double* min_out) {
  const __m256d zero = _mm256_setzero_pd();
  __m256d removed = _mm256_setzero_pd();
  __m256d lo = _mm256_set1_pd(len ? x[0] : 0.0);
  std::size_t k = 0;
  for (; k + 4 <= len; k += 4) {
    const __m256d v = _mm256_loadu_pd(x + k);
    lo = _mm256_min_pd(lo, v);
    removed = _mm256_sub_pd(removed, _mm256_min_pd(v, zero));
    _mm256_storeu_pd(x + k, _mm256_max_pd(v, zero));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, lo);
  double low = std::min(std::min(lanes[0], lanes[1]), std::min(lanes[2], lanes[3]));
  double rem = hsum(removed);
  if (k < len) {
    double tail_min = 0.0;
    rem += scalar_kernels().clip_negative(x + k, len - k, &tail_min);
    low = std::min(low, tail_min);
  }
  if (min_out) *min_out = low;
  return rem;
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{Isa::avx2,         upwind_row_avx2, face_flux_row_avx2,
                                 flux_diff_row_avx2, axpyz_avx2,      scale_avx2,
                                 scale_complex_avx2, sum_sq_avx2,     weighted_sum_sq_avx2,
                                 clip_negative_avx2};
  return table;
}

}  // namespace fbl::simd
