#pragma once

// The unconstrained-feature-model objective over OB(d, K) x OB(d, N):
//   f(W, H) = g(tau W^T H)   (or the SC loss of H alone)
// with Riemannian derivatives, optimality diagnostics and collapse metrics.

#include <cstdint>

#include "obnc/linalg.hpp"
#include "obnc/losses.hpp"
#include "obnc/manifold.hpp"

namespace obnc {

class UfmProblem {
 public:
  /// Throws PreconditionError / InvalidLayoutError on d < 1, K < 2, n < 1 or an
  /// invalid loss spec.
  UfmProblem(int d, int num_classes, int per_class, LossSpec spec);

  int dim() const { return d_; }
  int num_classes() const { return layout_.num_classes(); }
  int per_class() const { return layout_.per_class(); }
  int num_samples() const { return layout_.num_samples(); }
  double tau() const { return spec_.tau; }
  const LossSpec& spec() const { return spec_; }
  const LabelLayout& layout() const { return layout_; }

 private:
  int d_;
  LabelLayout layout_;
  LossSpec spec_;
};

struct UfmState {
  ObliqueMatrix w;  // d x K classifiers
  ObliqueMatrix h;  // d x N features, block layout
};

/// A pair of ambient matrices shaped like (W, H). Produced tangent by the
/// library routines; arithmetic helpers below do not re-project.
struct TangentPair {
  Matrix w;
  Matrix h;

  static TangentPair zeros_like(const UfmState& s);
  double dot(const TangentPair& o) const;
  double norm() const;
  TangentPair& operator+=(const TangentPair& o);
  TangentPair& operator-=(const TangentPair& o);
  TangentPair& operator*=(double s);
  friend TangentPair operator+(TangentPair a, const TangentPair& b) { return a += b; }
  friend TangentPair operator-(TangentPair a, const TangentPair& b) { return a -= b; }
  friend TangentPair operator*(double s, TangentPair a) { return a *= s; }
};

struct AlphaBeta {
  Vector alpha;  // alpha_k = <w_k, H g^k>
  Vector beta;   // beta_i  = <h_i, W g_i>
};

struct NcMetrics {
  double nc1 = 0.0;
  double nc2 = 0.0;
  double nc3 = 0.0;  // NaN for the SC loss (no classifier)
};

/// First-order data at a state, reusable across Hessian products.
struct LocalModel {
  double value = 0.0;
  Matrix gram;       // W^T H (CE family) or H^T H (SC)
  Matrix logits;     // tau W^T H; empty for SC
  Matrix head_grad;  // grad g(M), K x N; empty for SC
  TangentPair euclid;
  TangentPair riem;
};

/// Throws DimensionError unless W is d x K and H is d x N.
void check_state(const UfmProblem& problem, const UfmState& state);

LocalModel local_model(const UfmProblem& problem, const UfmState& state);

/// sqrt(K/(K-1)) P (I - 11^T/K) with P a seeded random d x K orthonormal
/// matrix. Throws InfeasibleDimensionError when d < K.
ObliqueMatrix simplex_etf(int d, int num_classes, std::uint64_t seed);

/// W = simplex ETF, H = W kron 1_n^T.
UfmState nc_solution(const UfmProblem& problem, std::uint64_t seed);

double f_value(const UfmProblem& problem, const UfmState& state);
TangentPair riem_grad(const UfmProblem& problem, const UfmState& state);

/// Riemannian Hessian bilinear form Hess f[delta, delta], evaluated term by
/// term (Euclidean second-order part plus the two curvature corrections).
/// Throws InvalidDirectionError if delta is not tangent within 1e-8.
double riem_hess_bilinear(const UfmProblem& problem, const UfmState& state,
                          const TangentPair& delta);

/// Hess f[delta] as a tangent pair.
TangentPair riem_hess_apply(const UfmProblem& problem, const UfmState& state,
                            const TangentPair& delta);
TangentPair riem_hess_apply(const UfmProblem& problem, const UfmState& state,
                            const LocalModel& model, const TangentPair& delta);

AlphaBeta alpha_beta(const UfmProblem& problem, const UfmState& state);
AlphaBeta alpha_beta(const UfmProblem& problem, const UfmState& state,
                     const LocalModel& model);

/// ‖grad_W‖_F + ‖grad_H‖_F <= tol.
bool is_critical(const UfmProblem& problem, const UfmState& state, double tol);

/// Sign test on (alpha, beta) against the spectral norm of grad g(M).
/// Throws PreconditionError when the state is not critical at tol.
bool global_certificate(const UfmProblem& problem, const UfmState& state, double tol);

/// log(1 + (K-1) exp(-K tau / (K-1))).
double global_lower_bound(int num_classes, double tau);

/// Label-smoothing objective at an NC solution: global_lower_bound + alpha tau.
double ls_nc_value(int num_classes, double tau, double alpha);
/// Label-smoothing objective with all classifiers and features collapsed to one point.
double ls_constant_value(int num_classes);

/// 2 (d - 2) / (1 + (K mod 2) / K): the temperature bound under which the
/// strict-saddle construction is guaranteed.
double tau_bound(int d, int num_classes);

NcMetrics nc_metrics(const UfmProblem& problem, const UfmState& state);
/// Metrics on raw (possibly unnormalized) matrices; pass an empty w for SC.
NcMetrics nc_metrics(const Matrix& w, const Matrix& h, const LabelLayout& layout);

/// Fraction of samples whose largest logit is the true class; ties go to the
/// smallest class index.
double train_accuracy(const UfmProblem& problem, const UfmState& state);
double train_accuracy(const Matrix& logits, const LabelLayout& layout);

}  // namespace obnc
