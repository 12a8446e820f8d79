#include "obnc/linalg.hpp"

#include <cmath>
#include <string>

#include "obnc/errors.hpp"
#include "obnc/kernels.hpp"
#include "obnc/rng.hpp"

namespace obnc {
namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw DimensionError("at_b: " + shape(a) + " vs " + shape(b));
  Matrix c(a.cols(), b.cols());
  kernels::active().gemm_tn(a.data(), b.data(), c.data(), a.rows(), a.cols(),
                            b.cols());
  return c;
}

Matrix a_b(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimensionError("a_b: " + shape(a) + " vs " + shape(b));
  Matrix c(a.rows(), b.cols());
  kernels::active().gemm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(),
                            b.cols());
  return c;
}

Matrix a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw DimensionError("a_bt: " + shape(a) + " vs " + shape(b));
  Matrix c(a.rows(), b.rows());
  kernels::active().gemm_nt(a.data(), b.data(), c.data(), a.rows(), b.rows(),
                            a.cols());
  return c;
}

Vector column_dots(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("column_dots: " + shape(a) + " vs " + shape(b));
  Vector out(a.cols());
  kernels::active().column_dots(a.data(), b.data(), out.data(), a.rows(),
                                a.cols());
  return out;
}

double inner(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("inner: " + shape(a) + " vs " + shape(b));
  return kernels::active().dot(a.data(), b.data(),
                               static_cast<std::size_t>(a.size()));
}

SingularPair top_singular_pair(const Matrix& g, int max_iters, double rel_tol,
                               std::uint64_t seed) {
  SingularPair out;
  CounterRng rng(seed);
  Vector v = rng.gaussian_matrix(g.cols(), 1).col(0);
  v.normalize();
  double prev = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    Vector u = g * v;
    const double sigma = u.norm();
    out.iterations = it;
    if (sigma == 0.0) {
      out.sigma = 0.0;
      out.u = Vector::Zero(g.rows());
      out.v = v;
      return out;
    }
    u /= sigma;
    Vector w = g.transpose() * u;
    const double wn = w.norm();
    v = w / wn;
    out.sigma = wn;
    out.u = u;
    out.v = v;
    if (it > 1 && std::abs(wn - prev) <= rel_tol * wn) break;
    prev = wn;
  }
  // Left vector consistent with the final right vector.
  Vector u = g * out.v;
  const double un = u.norm();
  if (un > 0.0) {
    out.u = u / un;
    out.sigma = un;
  }
  return out;
}

}  // namespace obnc
