#include <arm_neon.h>

#include "semtrack/simd/kernels.hpp"

namespace semtrack::simd {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0);
  float64x2_t s1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 = vfmaq_f64(s0, vld1q_f64(a + i), vld1q_f64(b + i));
    s1 = vfmaq_f64(s1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_rows_neon(const double* coeff, const double* x, std::size_t rows,
                    std::size_t stride, double* y, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (coeff[r] == 0.0) continue;
    axpy_neon(coeff[r], x + r * stride, y, n);
  }
}

void gemv_neon(const double* m, std::size_t rows, std::size_t stride,
               const double* v, std::size_t n, const double* bias, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = dot_neon(m + r * stride, v, n) + (bias ? bias[r] : 0.0);
  }
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable table{"neon", dot_neon, axpy_neon, axpy_rows_neon,
                                 gemv_neon};
  return table;
}

}  // namespace semtrack::simd
