#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "fbl/simd.hpp"

namespace fbl::simd {

std::string to_string(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) {
  if (isa == Isa::scalar) return true;
#if defined(FBL_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_available(isa)) throw std::runtime_error("kernel variant " + to_string(isa) + " not available");
#if defined(FBL_HAVE_AVX2)
  if (isa == Isa::avx2) return avx2_kernels();
#endif
  return scalar_kernels();
}

namespace {

const KernelTable* select_default() {
  const char* env = std::getenv("FBL_SIMD");
  if (env && std::strcmp(env, "scalar") == 0) return &scalar_kernels();
  if (isa_available(Isa::avx2)) return &kernels_for(Isa::avx2);
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

}  // namespace

const KernelTable& kernels() { return *active().load(std::memory_order_relaxed); }

void force_isa(Isa isa) { active().store(&kernels_for(isa), std::memory_order_relaxed); }

}  // namespace fbl::simd
