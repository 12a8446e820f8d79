#include <gtest/gtest.h>

#include <cmath>

#include "obnc/errors.hpp"
#include "obnc/rng.hpp"
#include "obnc/saddle.hpp"
#include "obnc/solvers.hpp"
#include "test_util.hpp"

namespace {

using namespace obnc;

UfmProblem ce(int d, int k, int n, double tau = 1.0) {
  return UfmProblem(d, k, n, LossSpec::cross_entropy(tau));
}

// Critical but not global: W and H confined to the first r < K - 1
// coordinates, then driven to criticality inside that subspace.
UfmState pinned_critical_state(const UfmProblem& p, int r, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix w = Matrix::Zero(p.dim(), p.num_classes()), h = Matrix::Zero(p.dim(), p.num_samples());
  w.topRows(r) = rng.gaussian_matrix(r, p.num_classes());
  h.topRows(r) = rng.gaussian_matrix(r, p.num_samples());
  SolverConfig c;
  c.max_iters = 20000;
  c.grad_tol = 1e-10;
  c.record_metrics = false;
  return rgd(p, UfmState{ObliqueMatrix::normalized(w), ObliqueMatrix::normalized(h)}, c)
      .final_state;
}

TEST(RankOneSaddle, CriticalWithLogKValue) {
  const UfmProblem p = ce(12, 5, 3);
  const UfmState s = rank_one_saddle(p, 4);
  EXPECT_LE(riem_grad(p, s).norm(), 1e-10);
  EXPECT_NEAR(f_value(p, s), std::log(5.0), 1e-15);
  EXPECT_FALSE(global_certificate(p, s, 1e-8));
  EXPECT_EQ(rank_one_saddle(p, 4).w, s.w);
}

TEST(RankOneSaddle, CrossEntropyOnly) {
  const UfmProblem p(12, 5, 3, LossSpec::focal(2.0, 1.0));
  EXPECT_THROW(rank_one_saddle(p, 1), UnsupportedError);
}

class CaseOne : public ::testing::TestWithParam<int> {};
INSTANTIATE_TEST_SUITE_P(Classes, CaseOne, ::testing::Range(2, 9));

TEST_P(CaseOne, NegativeCurvatureWithinProofBound) {
  const int k = GetParam();
  const double tau = 1.0;
  const UfmProblem p = ce(k + 2, k, 3, tau);
  const UfmState s = rank_one_saddle(p, 10 + k);
  const SaddleCertificate c = escape_direction_case1(p, s);
  EXPECT_EQ(c.case_tag, SaddleCase::kRankOneW);
  EXPECT_TRUE(c.hypothesis_holds);
  EXPECT_LT(c.hess_value, -1e-8);
  EXPECT_LE(c.ht_a_sq, 1e-20);
  EXPECT_LE(c.hess_value, c.proof_bound + 1e-10);
  EXPECT_LE(c.hess_value, -2.0 * tau * (k - k % 2) / k + 1e-10);
  EXPECT_NEAR(c.hess_value, riem_hess_bilinear(p, s, c.direction), 1e-10);
  EXPECT_NEAR(c.a.norm(), 1.0, 1e-14);
  EXPECT_LE(std::abs(c.a.dot(s.w.matrix().col(0))), 1e-12);
}

TEST(CaseOne, ProofBoundFormula) {
  const int k = 5, n = 3, big_n = k * n;
  const double tau = 1.0;
  const UfmProblem p = ce(12, k, n, tau);
  const SaddleCertificate c = escape_direction_case1(p, rank_one_saddle(p, 1));
  const double parity = static_cast<double>(k % 2) / k;
  const double bound = tau * (k - k % 2) / static_cast<double>(big_n * k) *
                       ((tau * (1 + parity) + 2) * c.ht_a_sq - 2.0 * big_n);
  EXPECT_NEAR(c.proof_bound, bound, 1e-12);
  EXPECT_NEAR(c.tau_bound, tau_bound(12, k), 0.0);
}

TEST(CaseOne, WrongCaseAtCollapse) {
  const UfmProblem p = ce(12, 5, 3);
  EXPECT_THROW(escape_direction_case1(p, nc_solution(p, 1)), WrongCaseError);
}

TEST(CaseOne, HypothesisOnlyGuardsNegativity) {
  // Above the temperature bound the construction is still attempted; for the
  // rank-one saddle it stays negative, so no error is raised.
  const UfmProblem p = ce(12, 5, 3, 20.0);
  const SaddleCertificate c = escape_direction_case1(p, rank_one_saddle(p, 1));
  EXPECT_FALSE(c.hypothesis_holds);
  EXPECT_LT(c.hess_value, 0.0);
}

TEST(CaseTwo, PinnedStateHasNegativeCurvature) {
  const UfmProblem p = ce(6, 4, 2);
  const UfmState s = pinned_critical_state(p, 2, 0);
  ASSERT_TRUE(is_critical(p, s, 1e-8));
  ASSERT_GT(f_value(p, s) - global_lower_bound(4, 1.0), 1e-2);
  const SaddleCertificate c = certify_strict_saddle(p, s, 1e-8);
  EXPECT_EQ(c.case_tag, SaddleCase::kFullBeta);
  EXPECT_LT(c.hess_value, -1e-6);
  EXPECT_NEAR(c.hess_value, riem_hess_bilinear(p, s, c.direction), 1e-10);
  EXPECT_NEAR(c.hess_value, c.proof_value, 1e-8);
  // The second-order logit term vanishes along the construction.
  const Matrix cross = at_b(s.w.matrix(), c.direction.h) + at_b(c.direction.w, s.h.matrix());
  EXPECT_LE(cross.norm(), 1e-12);
}

TEST(CaseTwo, NoEscapeAtCollapse) {
  const UfmProblem p = ce(12, 5, 3);
  EXPECT_THROW(escape_direction_case2(p, nc_solution(p, 1)), NoEscapeError);
}

TEST(CaseTwo, WrongCaseAtRankOneSaddle) {
  const UfmProblem p = ce(12, 5, 3);
  EXPECT_THROW(escape_direction_case2(p, rank_one_saddle(p, 1)), WrongCaseError);
}

TEST(Certify, DispatchAndPreconditions) {
  const UfmProblem p = ce(12, 5, 3);
  const SaddleCertificate c = certify_strict_saddle(p, rank_one_saddle(p, 2), 1e-8);
  EXPECT_EQ(c.case_tag, SaddleCase::kRankOneW);
  EXPECT_LT(c.hess_value, 0.0);
  EXPECT_THROW(certify_strict_saddle(p, nc_solution(p, 1), 1e-8), PreconditionError);
  EXPECT_THROW(certify_strict_saddle(p, test::random_state(p, 3), 1e-8), PreconditionError);
}

}  // namespace
