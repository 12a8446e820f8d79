// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma
// and must only be entered after the runtime CPU check in dispatch.cpp.

#include "obnc/kernels.hpp"

#include <immintrin.h>

#include <algorithm>

namespace obnc::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sw = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sw));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void column_dots_avx2(const double* a, const double* b, double* out,
                      std::size_t rows, std::size_t cols) {
  for (std::size_t j = 0; j < cols; ++j)
    out[j] = dot_avx2(a + j * rows, b + j * rows, rows);
}

// Four dots sharing the left operand: out[c] = <x, y_c>.
inline void dot4(const double* x, const double* y0, const double* y1,
                 const double* y2, const double* y3, std::size_t n,
                 double* out) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    s0 = _mm256_fmadd_pd(vx, _mm256_loadu_pd(y0 + i), s0);
    s1 = _mm256_fmadd_pd(vx, _mm256_loadu_pd(y1 + i), s1);
    s2 = _mm256_fmadd_pd(vx, _mm256_loadu_pd(y2 + i), s2);
    s3 = _mm256_fmadd_pd(vx, _mm256_loadu_pd(y3 + i), s3);
  }
  double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
  for (; i < n; ++i) {
    r0 += x[i] * y0[i];
    r1 += x[i] * y1[i];
    r2 += x[i] * y2[i];
    r3 += x[i] * y3[i];
  }
  out[0] = r0;
  out[1] = r1;
  out[2] = r2;
  out[3] = r3;
}

void gemm_tn_avx2(const double* a, const double* b, double* c,
                  std::size_t rows, std::size_t p, std::size_t q) {
  std::size_t j = 0;
  double tmp[4];
  for (; j + 4 <= q; j += 4) {
    const double* b0 = b + j * rows;
    for (std::size_t i = 0; i < p; ++i) {
      dot4(a + i * rows, b0, b0 + rows, b0 + 2 * rows, b0 + 3 * rows, rows,
           tmp);
      for (std::size_t t = 0; t < 4; ++t) c[i + (j + t) * p] = tmp[t];
    }
  }
  for (; j < q; ++j)
    for (std::size_t i = 0; i < p; ++i)
      c[i + j * p] = dot_avx2(a + i * rows, b + j * rows, rows);
}

void gemm_nn_avx2(const double* a, const double* b, double* c,
                  std::size_t rows, std::size_t p, std::size_t q) {
  std::fill(c, c + rows * q, 0.0);
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t k = 0; k < p; ++k)
      axpy_avx2(b[k + j * p], a + k * rows, c + j * rows, rows);
}

void gemm_nt_avx2(const double* a, const double* b, double* c,
                  std::size_t rows, std::size_t p, std::size_t q) {
  std::fill(c, c + rows * p, 0.0);
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t k = 0; k < p; ++k)
      axpy_avx2(b[k + j * p], a + j * rows, c + k * rows, rows);
}

}  // namespace

const KernelTable& avx2_table_unchecked() {
  static const KernelTable table{"avx2",       dot_avx2,     axpy_avx2,
                                 column_dots_avx2, gemm_tn_avx2, gemm_nn_avx2,
                                 gemm_nt_avx2};
  return table;
}

}  // namespace obnc::kernels
