#include "semtrack/simd/kernels.hpp"

namespace semtrack::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_rows_scalar(const double* coeff, const double* x, std::size_t rows,
                      std::size_t stride, double* y, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double c = coeff[r];
    if (c == 0.0) continue;
    axpy_scalar(c, x + r * stride, y, n);
  }
}

void gemv_scalar(const double* m, std::size_t rows, std::size_t stride,
                 const double* v, std::size_t n, const double* bias,
                 double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = dot_scalar(m + r * stride, v, n) + (bias ? bias[r] : 0.0);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", dot_scalar, axpy_scalar,
                                 axpy_rows_scalar, gemv_scalar};
  return table;
}

}  // namespace semtrack::simd
