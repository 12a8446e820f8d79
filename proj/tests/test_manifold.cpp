#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "obnc/errors.hpp"
#include "obnc/manifold.hpp"
#include "obnc/rng.hpp"

namespace {

using obnc::Matrix;
using obnc::ObliqueMatrix;

TEST(RandomOblique, SingleColumnIsUnit) {
  for (std::uint64_t s = 0; s < 5; ++s)
    EXPECT_NEAR(obnc::random_oblique(3, 1, s).col(0).norm(), 1.0, 1e-12);
}

TEST(RandomOblique, Deterministic) {
  EXPECT_TRUE(obnc::random_oblique(7, 9, 42) == obnc::random_oblique(7, 9, 42));
  EXPECT_FALSE(obnc::random_oblique(7, 9, 42) == obnc::random_oblique(7, 9, 43));
}

TEST(RandomOblique, CircleAnglesAreUniform) {
  const int q = 10000, bins = 8;
  const ObliqueMatrix x = obnc::random_oblique(2, q, 2024);
  std::array<int, bins> count{};
  for (int j = 0; j < q; ++j) {
    double a = std::atan2(x.matrix()(1, j), x.matrix()(0, j));
    if (a < 0) a += 2 * M_PI;
    ++count[std::min(bins - 1, static_cast<int>(a / (2 * M_PI) * bins))];
  }
  double chi2 = 0.0;
  const double expect = static_cast<double>(q) / bins;
  for (int c : count) chi2 += (c - expect) * (c - expect) / expect;
  // 7 degrees of freedom: P(chi2 > 24.32) = 0.001.
  EXPECT_LT(chi2, 24.32);
}

TEST(ObliqueMatrix, RejectsNonUnitColumns) {
  Matrix m(2, 1);
  m << 1.0, 1e-5;
  EXPECT_THROW(ObliqueMatrix{m}, obnc::NumericError);
  EXPECT_THROW(ObliqueMatrix::normalized(Matrix::Zero(3, 2)), obnc::DegenerateRetractionError);
}

TEST(TangentProject, RemovesBasePoint) {
  const ObliqueMatrix x = obnc::random_oblique(5, 4, 1);
  EXPECT_LE(obnc::tangent_project(x, x.matrix()).data.norm(), 1e-15);
}

TEST(TangentProject, Idempotent) {
  const ObliqueMatrix x = obnc::random_oblique(6, 3, 2);
  obnc::CounterRng rng(3);
  const Matrix v = obnc::tangent_project(x, rng.gaussian_matrix(6, 3)).data;
  EXPECT_LE((obnc::tangent_project(x, v).data - v).norm(), 1e-15);
  EXPECT_LE(obnc::tangency_violation(x, v), 1e-15);
}

TEST(TangentProject, HandExample) {
  const ObliqueMatrix x(Matrix{{1.0}, {0.0}});
  const Matrix p = obnc::tangent_project(x, Matrix{{3.0}, {4.0}}).data;
  EXPECT_EQ(p(0, 0), 0.0);
  EXPECT_EQ(p(1, 0), 4.0);
}

TEST(TangentProject, ShapeMismatchThrows) {
  const ObliqueMatrix x = obnc::random_oblique(3, 2, 1);
  EXPECT_THROW(obnc::tangent_project(x, Matrix::Zero(3, 3)), obnc::DimensionError);
}

TEST(Retract, ZeroStepIsIdentity) {
  const ObliqueMatrix x = obnc::random_oblique(4, 3, 5);
  obnc::CounterRng rng(6);
  EXPECT_TRUE(obnc::retract(x, rng.gaussian_matrix(4, 3), 0.0) == x);
}

TEST(Retract, HandExample) {
  const ObliqueMatrix x(Matrix{{1.0}, {0.0}});
  const ObliqueMatrix y = obnc::retract(x, Matrix{{0.0}, {1.0}}, 1.0);
  EXPECT_NEAR(y.matrix()(0, 0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(y.matrix()(1, 0), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Retract, DegenerateColumnThrows) {
  const ObliqueMatrix x(Matrix{{1.0}, {0.0}});
  EXPECT_THROW(obnc::retract(x, Matrix{{-1.0}, {0.0}}, 1.0), obnc::DegenerateRetractionError);
}

TEST(Retract, SecondOrderCloseToLine) {
  const ObliqueMatrix x = obnc::random_oblique(8, 5, 7);
  obnc::CounterRng rng(8);
  const Matrix v = obnc::tangent_project(x, rng.gaussian_matrix(8, 5)).data;
  auto err = [&](double t) { return (obnc::retract(x, v, t).matrix() - (x.matrix() + t * v)).norm(); };
  const double ratio = err(1e-3) / err(1e-4);
  EXPECT_NEAR(ratio, 100.0, 1.0);
}

}  // namespace
