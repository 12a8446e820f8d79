#pragma once

// Oblique manifold OB(d, q): d x q matrices with unit-norm columns.

#include <cstdint>

#include "obnc/linalg.hpp"

namespace obnc {

inline constexpr double kMembershipTol = 1e-12;
inline constexpr double kTangencyTol = 1e-10;

/// A point on OB(d, q). Immutable; construction enforces unit columns.
class ObliqueMatrix {
 public:
  /// Takes ownership of data; throws NumericError unless every column has
  /// norm 1 within kMembershipTol.
  explicit ObliqueMatrix(Matrix data);

  /// Rescales each column to unit norm. Throws DegenerateRetractionError on
  /// a zero column.
  static ObliqueMatrix normalized(Matrix data);

  const Matrix& matrix() const { return data_; }
  Eigen::Index rows() const { return data_.rows(); }
  Eigen::Index cols() const { return data_.cols(); }
  auto col(Eigen::Index j) const { return data_.col(j); }

  friend bool operator==(const ObliqueMatrix& a, const ObliqueMatrix& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_;
  }

 private:
  struct Unchecked {};
  ObliqueMatrix(Matrix data, Unchecked) : data_(std::move(data)) {}

  Matrix data_;
};

/// A tangent vector at some base point. Tangency is established by the
/// producing operation (tangent_project) and re-checked where it matters.
struct TangentMatrix {
  Matrix data;
};

/// Max over columns of |<x_k, v_k>|.
double tangency_violation(const ObliqueMatrix& x, const Matrix& v);

/// Max over columns of |‖x_k‖ - 1|.
double membership_violation(const Matrix& x);

/// Columns i.i.d. uniform on S^{d-1}; deterministic in seed.
ObliqueMatrix random_oblique(Eigen::Index d, Eigen::Index q, std::uint64_t seed);

/// Z - X ddiag(X^T Z).
TangentMatrix tangent_project(const ObliqueMatrix& x, const Matrix& z);

/// Column k -> (x_k + t v_k) / ‖x_k + t v_k‖ (metric-projection retraction).
/// Throws DegenerateRetractionError if a column norm drops below 1e-14.
ObliqueMatrix retract(const ObliqueMatrix& x, const TangentMatrix& v, double t);
ObliqueMatrix retract(const ObliqueMatrix& x, const Matrix& v, double t);

}  // namespace obnc
