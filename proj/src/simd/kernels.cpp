#include "semtrack/simd/kernels.hpp"

#include <cstdlib>
#include <string>

namespace semtrack::simd {

#if defined(SEMTRACK_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(SEMTRACK_HAVE_NEON)
const KernelTable& neon_table();
#endif

const KernelTable* avx2_kernels() {
#if defined(SEMTRACK_HAVE_AVX2)
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_kernels() {
#if defined(SEMTRACK_HAVE_NEON)
  // NEON is mandatory on aarch64.
  return &neon_table();
#else
  return nullptr;
#endif
}

namespace {

const KernelTable& select() {
  if (const char* env = std::getenv("SEMTRACK_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return scalar_kernels();
    if (want == "avx2" && avx2_kernels()) return *avx2_kernels();
    if (want == "neon" && neon_kernels()) return *neon_kernels();
  }
  if (const KernelTable* t = avx2_kernels()) return *t;
  if (const KernelTable* t = neon_kernels()) return *t;
  return scalar_kernels();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace semtrack::simd
