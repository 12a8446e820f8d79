#include "obnc/saddle.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include <Eigen/Eigenvalues>

#include "obnc/errors.hpp"
#include "obnc/linalg.hpp"

namespace obnc {
namespace {

void require_ce(const UfmProblem& problem, const char* who) {
  if (problem.spec().kind != LossKind::kCrossEntropy)
    throw UnsupportedError(std::string(who) + " is only defined for the CE loss");
}

double parity(int k) { return static_cast<double>(k % 2) / k; }

bool hypothesis(const UfmProblem& problem) {
  return problem.dim() > problem.num_classes() &&
         problem.tau() < tau_bound(problem.dim(), problem.num_classes());
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

}  // namespace

std::string saddle_case_name(SaddleCase c) {
  return c == SaddleCase::kRankOneW ? "RankOneW" : "FullBeta";
}

UfmState rank_one_saddle(const UfmProblem& problem, std::uint64_t seed) {
  require_ce(problem, "rank_one_saddle");
  const ObliqueMatrix w = random_oblique(problem.dim(), 1, seed);
  Matrix wk = w.matrix().replicate(1, problem.num_classes());
  Matrix hn = w.matrix().replicate(1, problem.num_samples());
  return UfmState{ObliqueMatrix(std::move(wk)), ObliqueMatrix(std::move(hn))};
}

SaddleCertificate escape_direction_case1(const UfmProblem& problem, const UfmState& state,
                                         double tol) {
  require_ce(problem, "escape_direction_case1");
  check_state(problem, state);
  const AlphaBeta ab = alpha_beta(problem, state);
  if (!(ab.beta.cwiseAbs().minCoeff() <= tol))
    throw WrongCaseError("case 1 needs some beta_i = 0 (min |beta| = " +
                         fmt(ab.beta.cwiseAbs().minCoeff()) + ")");
  const Matrix& w_mat = state.w.matrix();
  const Vector w = w_mat.col(0);
  const double spread = (w_mat.colwise() - w).cwiseAbs().maxCoeff();
  if (spread > 1e-8) throw WrongCaseError("case 1 needs W = w 1^T");

  const int d = problem.dim();
  const int k = problem.num_classes();
  const int n_total = problem.num_samples();
  const double tau = problem.tau();
  const Matrix& h = state.h.matrix();
  if (d < 2) throw WrongCaseError("case 1 needs d >= 2");

  // a: unit vector in span(v1, v2) (two smallest eigenvectors of H H^T) with w^T a = 0.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a_bt(h, h));
  const Vector v1 = eig.eigenvectors().col(0);
  const Vector v2 = eig.eigenvectors().col(1);
  const double c1 = w.dot(v2);
  const double c2 = -w.dot(v1);
  Vector a = (std::hypot(c1, c2) > 1e-14) ? Vector(c1 * v1 + c2 * v2) : v1;
  a -= w * w.dot(a);
  a.normalize();

  Vector u(k);
  for (int i = 0; i < k; ++i) u(i) = (i % 2 == 0) ? 1.0 : -1.0;

  SaddleCertificate cert;
  cert.case_tag = SaddleCase::kRankOneW;
  cert.a = a;
  cert.direction.w = a * u.transpose();
  cert.direction.h.resize(d, n_total);
  for (int j = 0; j < n_total; ++j) {
    const auto hj = h.col(j);
    cert.direction.h.col(j) = u(problem.layout().class_of(j)) * (a - hj * hj.dot(a));
  }
  cert.hess_value = riem_hess_bilinear(problem, state, cert.direction);
  cert.tau_bound = tau_bound(d, k);
  cert.hypothesis_holds = hypothesis(problem);

  const double p = parity(k);
  cert.ht_a_sq = at_b(h, a).squaredNorm();
  cert.gamma = 2.0 * n_total / (tau * (1.0 + p) + 2.0);
  cert.sigma_sq_second_smallest = eig.eigenvalues()(1);
  cert.proof_bound = tau * (k - k % 2) / (static_cast<double>(n_total) * k) *
                     ((tau * (1.0 + p) + 2.0) * cert.ht_a_sq - 2.0 * n_total);

  if (!cert.hypothesis_holds && !(cert.hess_value < 0.0))
    throw HypothesisViolatedError("tau = " + fmt(tau) + " is outside tau < " +
                                  fmt(cert.tau_bound) + " (or d <= K) and the case 1 "
                                  "curvature is " + fmt(cert.hess_value));
  return cert;
}

SaddleCertificate escape_direction_case2(const UfmProblem& problem, const UfmState& state,
                                         double tol) {
  require_ce(problem, "escape_direction_case2");
  const LocalModel model = local_model(problem, state);
  const double gnorm = model.riem.w.norm() + model.riem.h.norm();
  if (!(gnorm <= tol))
    throw PreconditionError("case 2 needs a critical state (gradient norm " + fmt(gnorm) +
                            ")");
  const AlphaBeta ab = alpha_beta(problem, state, model);
  if (ab.beta.cwiseAbs().minCoeff() <= tol)
    throw WrongCaseError("case 2 needs every beta_i != 0");
  if (global_certificate(problem, state, tol))
    throw NoEscapeError("state is globally optimal; no escape direction exists");

  const int d = problem.dim();
  const int k = problem.num_classes();
  const double tau = problem.tau();
  const Matrix& w = state.w.matrix();
  const Matrix& h = state.h.matrix();

  // a spans the common null space of W^T and H^T; at a critical point with
  // nonzero beta the second is implied by the first.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a_bt(w, w) + a_bt(h, h));
  const Vector a = eig.eigenvectors().col(0);
  if (eig.eigenvalues()(0) > 1e-8)
    throw PreconditionError("case 2 needs a nonzero a with W^T a = 0 and H^T a = 0 "
                            "(smallest eigenvalue " + fmt(eig.eigenvalues()(0)) + ")");

  const SingularPair top = top_singular_pair(model.head_grad, 1000, 1e-14);
  const double root4 = std::pow(static_cast<double>(problem.per_class()), 0.25);
  const Vector uu = -top.u / root4;
  const Vector vv = root4 * top.v;

  SaddleCertificate cert;
  cert.case_tag = SaddleCase::kFullBeta;
  cert.a = a;
  cert.direction.w = tangent_project(state.w, a * uu.transpose()).data;
  cert.direction.h = tangent_project(state.h, a * vv.transpose()).data;
  cert.hess_value = riem_hess_bilinear(problem, state, cert.direction);
  cert.tau_bound = tau_bound(d, k);
  cert.hypothesis_holds = hypothesis(problem);
  cert.grad_g_norm = top.sigma;
  cert.proof_value = -2.0 * tau * top.sigma - tau * ab.alpha.dot(uu.cwiseAbs2()) -
                     tau * ab.beta.dot(vv.cwiseAbs2());
  return cert;
}

SaddleCertificate certify_strict_saddle(const UfmProblem& problem, const UfmState& state,
                                        double tol) {
  require_ce(problem, "certify_strict_saddle");
  if (!is_critical(problem, state, tol))
    throw PreconditionError("state is not critical at tol " + fmt(tol));
  if (global_certificate(problem, state, tol))
    throw NoEscapeError("state is globally optimal; no escape direction exists");
  const AlphaBeta ab = alpha_beta(problem, state);
  if (ab.beta.cwiseAbs().minCoeff() <= tol)
    return escape_direction_case1(problem, state, tol);
  return escape_direction_case2(problem, state, tol);
}

}  // namespace obnc
