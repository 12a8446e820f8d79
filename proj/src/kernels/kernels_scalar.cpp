#include "obnc/kernels.hpp"

#include <algorithm>

namespace obnc::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void column_dots_scalar(const double* a, const double* b, double* out,
                        std::size_t rows, std::size_t cols) {
  for (std::size_t j = 0; j < cols; ++j)
    out[j] = dot_scalar(a + j * rows, b + j * rows, rows);
}

void gemm_tn_scalar(const double* a, const double* b, double* c,
                    std::size_t rows, std::size_t p, std::size_t q) {
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t i = 0; i < p; ++i)
      c[i + j * p] = dot_scalar(a + i * rows, b + j * rows, rows);
}

void gemm_nn_scalar(const double* a, const double* b, double* c,
                    std::size_t rows, std::size_t p, std::size_t q) {
  std::fill(c, c + rows * q, 0.0);
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t k = 0; k < p; ++k)
      axpy_scalar(b[k + j * p], a + k * rows, c + j * rows, rows);
}

void gemm_nt_scalar(const double* a, const double* b, double* c,
                    std::size_t rows, std::size_t p, std::size_t q) {
  std::fill(c, c + rows * p, 0.0);
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t k = 0; k < p; ++k)
      axpy_scalar(b[k + j * p], a + j * rows, c + k * rows, rows);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar",        dot_scalar,
                                 axpy_scalar,     column_dots_scalar,
                                 gemm_tn_scalar,  gemm_nn_scalar,
                                 gemm_nt_scalar};
  return table;
}

}  // namespace obnc::kernels
