#pragma once

// Eigen-facing wrappers over the dispatched kernels, plus the small dense
// routines (power iteration, spectral norm) shared by several modules.

#include <Eigen/Dense>
#include <cstdint>

namespace obnc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A^T B. Row counts must agree.
Matrix at_b(const Matrix& a, const Matrix& b);
/// A B.
Matrix a_b(const Matrix& a, const Matrix& b);
/// A B^T. Column counts must agree.
Matrix a_bt(const Matrix& a, const Matrix& b);
/// out(j) = <A(:,j), B(:,j)>.
Vector column_dots(const Matrix& a, const Matrix& b);
/// Frobenius inner product.
double inner(const Matrix& a, const Matrix& b);

struct SingularPair {
  double sigma = 0.0;
  Vector u;  // left, unit norm
  Vector v;  // right, unit norm
  int iterations = 0;
};

/// Leading singular triple of G by power iteration on G^T G, started from a
/// fixed-seed random vector. Stops after max_iters or when the estimate
/// changes by less than rel_tol (relative).
SingularPair top_singular_pair(const Matrix& g, int max_iters, double rel_tol,
                               std::uint64_t seed = 0x5eedULL);

}  // namespace obnc
