#pragma once

// Dense inner-loop kernels over column-major double arrays.
//
// Every kernel has a portable scalar reference implementation; an AVX2/FMA
// variant is compiled on x86-64 and selected at runtime when the CPU
// supports it. The two tables must agree to rounding (see test_kernels).
// Setting OBNC_KERNELS=scalar in the environment pins the scalar table.

#include <cstddef>
#include <string_view>

namespace obnc::kernels {

struct KernelTable {
  const char* name;

  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);

  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // out[j] = <A(:,j), B(:,j)>, A and B are rows x cols
  void (*column_dots)(const double* a, const double* b, double* out,
                      std::size_t rows, std::size_t cols);

  // C (p x q) = A^T B with A rows x p, B rows x q
  void (*gemm_tn)(const double* a, const double* b, double* c,
                  std::size_t rows, std::size_t p, std::size_t q);

  // C (rows x q) = A B with A rows x p, B p x q
  void (*gemm_nn)(const double* a, const double* b, double* c,
                  std::size_t rows, std::size_t p, std::size_t q);

  // C (rows x p) = A B^T with A rows x q, B p x q
  void (*gemm_nt)(const double* a, const double* b, double* c,
                  std::size_t rows, std::size_t p, std::size_t q);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

// Table used by the library. Resolved once, on first use.
const KernelTable& active();

std::string_view active_name();

}  // namespace obnc::kernels
