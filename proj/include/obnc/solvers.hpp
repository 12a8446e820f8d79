#pragma once

// Riemannian GD with exact line search, Riemannian CG (PR+), Steihaug
// trust-region, and the Euclidean weight/feature-decay baseline.

#include <cstdint>
#include <string>
#include <vector>

#include "obnc/errors.hpp"
#include "obnc/ufm.hpp"

namespace obnc {

struct LineSearchConfig {
  double tol = 1e-10;        // golden-section stops at this relative bracket width
  double bracket_max = 1.0;  // first trial step; doubled/halved until bracketed
  int max_expansions = 60;
};

struct TrustRegionConfig {
  double radius0 = 0.0;     // <= 0: pi sqrt(K + N) / 8
  double radius_max = 0.0;  // <= 0: pi sqrt(K + N)
  double eta1 = 0.1;        // accept iff rho >= eta1, else shrink
  double eta2 = 0.75;       // grow when rho > eta2 on the boundary
  double shrink = 0.25;
  double grow = 2.0;
  int max_inner = 0;        // <= 0: manifold dimension
  double kappa = 0.1;       // inner stop ‖r‖ <= ‖r0‖ min(‖r0‖, kappa)
};

struct SolverConfig {
  int max_iters = 1000;
  double grad_tol = 1e-8;
  std::uint64_t seed = 0;
  LineSearchConfig line_search;
  int cg_restart = 50;
  TrustRegionConfig tr;
  int record_every = 1;
  bool record_metrics = true;  // NC metrics and accuracy per record

  /// Throws PreconditionError on max_iters < 1, grad_tol <= 0, bad radii or
  /// eta ordering.
  void validate() const;
};

enum class SolverStatus { kConverged, kMaxIters, kStepFailure, kDiverged };
std::string status_name(SolverStatus s);

struct TraceRecord {
  int iter = 0;
  double f = 0.0;
  double grad_norm = 0.0;  // ‖grad_W‖ + ‖grad_H‖ (Euclidean for the baseline)
  double nc1 = 0.0, nc2 = 0.0, nc3 = 0.0;
  double accuracy = 0.0;   // NaN for SC
  double elapsed_ms = 0.0;
};

struct SolverTrace {
  explicit SolverTrace(UfmState init) : final_state(std::move(init)) {}

  std::vector<TraceRecord> records;
  UfmState final_state;
  bool converged = false;
  SolverStatus status = SolverStatus::kMaxIters;
  int iterations = 0;
  int accepted_steps = 0;
  std::string message;
};

/// phi(t) - phi(0) for phi(t) = f(retract(state, dir, t)), evaluated from
/// precomputed Gram blocks in O(K N) (O(N^2) for SC) per call. The
/// difference is formed with log1p/expm1 on the logit change, so it stays
/// accurate when the decrease is far below the rounding level of f itself.
class RayEvaluator {
 public:
  RayEvaluator(const UfmProblem& problem, const UfmState& state, const TangentPair& dir);
  /// +inf when a column of x + t v degenerates.
  double delta(double t) const;

 private:
  double delta_head(double t) const;
  double delta_sc(double t) const;

  const UfmProblem& problem_;
  Matrix a_, b_, c_;     // t^0, t^1, t^2 coefficients of the unnormalized Gram
  Vector xv_w_, vv_w_;   // per column <x, v> and ‖v‖^2, W block (CE family)
  Vector xv_h_, vv_h_;   // same for H
  Matrix prob_;          // softmax at t = 0 (columns, or rows over l != i for SC)
  double f0_ = 0.0;      // only used by the focal loss
};

SolverTrace rgd(const UfmProblem& problem, const UfmState& init, const SolverConfig& config);
SolverTrace rcg(const UfmProblem& problem, const UfmState& init, const SolverConfig& config);

/// Needs a loss with a Hessian (CE or label smoothing). Throws
/// InternalConsistencyError if the Hessian operator fails its symmetry probe.
SolverTrace rtr(const UfmProblem& problem, const UfmState& init, const SolverConfig& config);

/// Dispatch by name: "rgd", "rcg", "rtr".
SolverTrace run_solver(const std::string& name, const UfmProblem& problem,
                       const UfmState& init, const SolverConfig& config);

// ---- regularized baseline ----

struct RegularizedConfig {
  double lambda_w = 1e-4;
  double lambda_h = 1e-4;
  double step = 1.0;
  void validate() const;
};

struct RegularizedTrace {
  std::vector<TraceRecord> records;
  Matrix w;
  Matrix h;
  bool converged = false;
  SolverStatus status = SolverStatus::kMaxIters;
  int iterations = 0;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, RegularizedTrace partial)
      : Error(what), partial_(std::move(partial)) {}
  const RegularizedTrace& partial() const { return partial_; }

 private:
  RegularizedTrace partial_;
};

/// g(tau W^T H) + lambda_w/2 ‖W‖^2 + lambda_h/2 ‖H‖^2 with its Euclidean gradient.
double regularized_value(const UfmProblem& problem, const RegularizedConfig& reg,
                         const Matrix& w, const Matrix& h, Matrix* grad_w = nullptr,
                         Matrix* grad_h = nullptr);

/// Fixed-step gradient descent on the regularized objective. Throws
/// DivergenceError (with the partial trace) once f exceeds 10x its initial value.
RegularizedTrace egd_regularized(const UfmProblem& problem, const Matrix& w0,
                                 const Matrix& h0, const RegularizedConfig& reg,
                                 const SolverConfig& config);

/// Largest power-of-two step that keeps f non-increasing and finite for
/// probe_iters iterations: double from 1 until that fails, then halve once.
double tune_regularized_step(const UfmProblem& problem, const Matrix& w0, const Matrix& h0,
                             double lambda_w, double lambda_h, int probe_iters = 100);

}  // namespace obnc
