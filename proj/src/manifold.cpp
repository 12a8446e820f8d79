#include "obnc/manifold.hpp"

#include <cmath>
#include <string>

#include "obnc/errors.hpp"
#include "obnc/rng.hpp"

namespace obnc {

ObliqueMatrix::ObliqueMatrix(Matrix data) : data_(std::move(data)) {
  if (data_.rows() < 1 || data_.cols() < 1)
    throw DimensionError("ObliqueMatrix: empty matrix");
  const double viol = membership_violation(data_);
  if (!(viol <= kMembershipTol))
    throw NumericError("ObliqueMatrix: column norm off by " + std::to_string(viol));
}

ObliqueMatrix ObliqueMatrix::normalized(Matrix data) {
  if (data.rows() < 1 || data.cols() < 1)
    throw DimensionError("ObliqueMatrix: empty matrix");
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    const double nrm = data.col(j).norm();
    if (!(nrm >= 1e-14) || !std::isfinite(nrm))
      throw DegenerateRetractionError("column " + std::to_string(j) +
                                      " has norm " + std::to_string(nrm));
    data.col(j) /= nrm;
  }
  return ObliqueMatrix(std::move(data), Unchecked{});
}

double membership_violation(const Matrix& x) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double dev = std::abs(x.col(j).norm() - 1.0);
    if (!(dev <= worst)) worst = dev;  // NaN propagates as "worst"
  }
  return worst;
}

double tangency_violation(const ObliqueMatrix& x, const Matrix& v) {
  if (v.rows() != x.rows() || v.cols() != x.cols())
    throw DimensionError("tangency_violation: shape mismatch");
  return column_dots(x.matrix(), v).cwiseAbs().maxCoeff();
}

ObliqueMatrix random_oblique(Eigen::Index d, Eigen::Index q, std::uint64_t seed) {
  if (d < 1 || q < 1) throw DimensionError("random_oblique: d and q must be >= 1");
  CounterRng rng(seed);
  return ObliqueMatrix::normalized(rng.gaussian_matrix(d, q));
}

TangentMatrix tangent_project(const ObliqueMatrix& x, const Matrix& z) {
  if (z.rows() != x.rows() || z.cols() != x.cols())
    throw DimensionError("tangent_project: Z is " + std::to_string(z.rows()) + "x" +
                         std::to_string(z.cols()) + ", X is " +
                         std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  const Vector c = column_dots(x.matrix(), z);
  return TangentMatrix{z - x.matrix() * c.asDiagonal()};
}

ObliqueMatrix retract(const ObliqueMatrix& x, const Matrix& v, double t) {
  if (v.rows() != x.rows() || v.cols() != x.cols())
    throw DimensionError("retract: shape mismatch");
  if (t == 0.0) return x;
  Matrix y = x.matrix() + t * v;
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    const double nrm = y.col(j).norm();
    if (!(nrm >= 1e-14))
      throw DegenerateRetractionError("retract: column " + std::to_string(j) +
                                      " collapsed");
  }
  return ObliqueMatrix::normalized(std::move(y));
}

ObliqueMatrix retract(const ObliqueMatrix& x, const TangentMatrix& v, double t) {
  return retract(x, v.data, t);
}

}  // namespace obnc
