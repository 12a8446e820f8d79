#pragma once

// Exact non-global critical points of the CE objective and the
// negative-curvature directions that certify them as strict saddles.

#include <cstdint>
#include <string>

#include "obnc/ufm.hpp"

namespace obnc {

enum class SaddleCase {
  kRankOneW,  // some beta_i = 0, hence W = w 1_K^T
  kFullBeta,  // every beta_i != 0
};

std::string saddle_case_name(SaddleCase c);  // "RankOneW" / "FullBeta"

struct SaddleCertificate {
  SaddleCase case_tag = SaddleCase::kRankOneW;
  TangentPair direction;
  Vector a;                 // the unit vector both blocks of the direction live on
  double hess_value = 0.0;  // Hess f[direction, direction]
  double tau_bound = 0.0;   // 2 (d - 2) / (1 + (K mod 2) / K)
  bool hypothesis_holds = false;  // d > K and tau < tau_bound

  // Case 1 only.
  double ht_a_sq = 0.0;       // ‖H^T a‖^2
  double proof_bound = 0.0;   // upper bound on hess_value from the construction
  double sigma_sq_second_smallest = 0.0;  // lambda_{d-1}(H H^T)
  double gamma = 0.0;         // 2N / (tau (1 + (K mod 2)/K) + 2)

  // Case 2 only.
  double proof_value = 0.0;   // -2 tau ‖G‖ - tau sum alpha u^2 - tau sum beta v^2
  double grad_g_norm = 0.0;   // spectral norm of grad g(M)
};

/// W = w 1_K^T, H = w 1_N^T for a seeded random unit w. CE loss only.
UfmState rank_one_saddle(const UfmProblem& problem, std::uint64_t seed);

/// Case 1 construction. Throws WrongCaseError when no beta_i vanishes (at
/// tol) or W is not rank one. Outside the hypothesis (d <= K or
/// tau >= tau_bound) the construction is still attempted and
/// HypothesisViolatedError is thrown only if the curvature is not negative.
SaddleCertificate escape_direction_case1(const UfmProblem& problem, const UfmState& state,
                                         double tol = 1e-8);

/// Case 2 construction at a critical point with every beta_i nonzero.
/// Throws PreconditionError if not critical, WrongCaseError if some
/// |beta_i| <= tol, NoEscapeError if the global certificate holds.
SaddleCertificate escape_direction_case2(const UfmProblem& problem, const UfmState& state,
                                         double tol = 1e-8);

/// Critical, non-global state -> certificate with negative curvature.
/// Dispatches on min_i |beta_i| <= tol.
SaddleCertificate certify_strict_saddle(const UfmProblem& problem, const UfmState& state,
                                        double tol = 1e-8);

}  // namespace obnc
