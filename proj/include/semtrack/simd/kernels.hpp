#pragma once

// Data-parallel inner loops used by the dense layers.
//
// Every kernel has a scalar reference implementation. Vector variants
// (AVX2+FMA on x86-64, NEON on aarch64) are compiled into separate
// translation units and selected once per process after a CPU feature
// check. Set SEMTRACK_SIMD=scalar in the environment to force the
// reference path.

#include <cstddef>
#include <string_view>

namespace semtrack::simd {

struct KernelTable {
  std::string_view name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] = alpha * x[i] + y[i] for each of `rows` rows of width n, with
  // per-row coefficients: y += sum_r coeff[r] * x_r. Rows of x are `stride`
  // apart.
  void (*axpy_rows)(const double* coeff, const double* x, std::size_t rows,
                    std::size_t stride, double* y, std::size_t n);
  // out[r] = dot(m_r, v) + bias[r] for `rows` rows of m, `stride` apart.
  void (*gemv)(const double* m, std::size_t rows, std::size_t stride,
               const double* v, std::size_t n, const double* bias, double* out);
};

const KernelTable& scalar_kernels();

// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// Kernel table in use for this process.
const KernelTable& active();

inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}

}  // namespace semtrack::simd
