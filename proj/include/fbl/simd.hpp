#pragma once

// Data-parallel inner loops used by the grid solvers. Every kernel has a
// scalar reference version; an AVX2 version is picked at runtime when the CPU
// supports it. Elementwise kernels are bit-identical across variants (no FMA
// contraction); reductions agree to round-off.

#include <cstddef>
#include <string>

namespace fbl::simd {

enum class Isa { scalar, avx2 };

std::string to_string(Isa isa);

struct KernelTable {
  Isa isa;

  // out[k] -= coef * (max(vel,0) * (cur - prev) + min(vel,0) * (next - cur))
  void (*upwind_row)(double* out, const double* cur, const double* prev, const double* next,
                     const double* vel, double coef, std::size_t len);

  // Upwind face flux F_{k+1/2} for velocity a: face velocity (a_k + a_{k+1})/2,
  // flux = max(af,0) * cur + min(af,0) * next.
  void (*face_flux_row)(double* flux, const double* cur, const double* next, const double* vel_cur,
                        const double* vel_next, std::size_t len);

  // out[k] -= coef * (flux[k] - flux_prev[k])
  void (*flux_diff_row)(double* out, const double* flux, const double* flux_prev, double coef,
                        std::size_t len);

  // y[k] += a * x[k] * z[k]
  void (*axpyz)(double* y, double a, const double* x, const double* z, std::size_t len);

  // x[k] *= a
  void (*scale)(double* x, double a, std::size_t len);

  // Interleaved complex array c[2k], c[2k+1] both multiplied by mult[k].
  void (*scale_complex)(double* c, const double* mult, std::size_t n_complex);

  double (*sum_sq)(const double* x, std::size_t len);
  double (*weighted_sum_sq)(const double* x, const double* w, std::size_t len);

  // Sets negative entries to zero; returns the sum of the removed magnitudes and
  // writes the smallest pre-clip value to *min_out.
  double (*clip_negative)(double* x, std::size_t len, double* min_out);
};

const KernelTable& scalar_kernels();
#if defined(FBL_HAVE_AVX2)
const KernelTable& avx2_kernels();
#endif

bool isa_available(Isa isa);
const KernelTable& kernels_for(Isa isa);

/// Active table: AVX2 when available unless FBL_SIMD=scalar is set in the
/// environment or force_isa() was called.
const KernelTable& kernels();
void force_isa(Isa isa);

}  // namespace fbl::simd
