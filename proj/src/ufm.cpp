#include "obnc/ufm.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "obnc/errors.hpp"
#include "obnc/rng.hpp"

namespace obnc {
namespace {

constexpr double kDirectionTol = 1e-8;

void check_direction(const UfmState& state, const TangentPair& delta) {
  if (delta.w.rows() != state.w.rows() || delta.w.cols() != state.w.cols() ||
      delta.h.rows() != state.h.rows() || delta.h.cols() != state.h.cols())
    throw DimensionError("direction shape does not match the state");
  const double viol = std::max(tangency_violation(state.w, delta.w),
                               tangency_violation(state.h, delta.h));
  if (!(viol <= kDirectionTol))
    throw InvalidDirectionError("direction is not tangent (violation " +
                                std::to_string(viol) + ")");
}

// Row-wise dots: out(k) = sum_i a(k, i) b(k, i).
Vector row_dots(const Matrix& a, const Matrix& b) {
  return a.cwiseProduct(b).rowwise().sum();
}

void require_classifier(const UfmProblem& problem, const char* who) {
  if (!problem.spec().has_classifier())
    throw UnsupportedError(std::string(who) + " is not defined for the SC loss");
}

// (I - 11^T/K) / sqrt(K-1): the unit-Frobenius simplex ETF Gram.
Matrix etf_gram_target(Eigen::Index k) {
  Matrix t = Matrix::Identity(k, k);
  t.array() -= 1.0 / static_cast<double>(k);
  return t / std::sqrt(static_cast<double>(k - 1));
}

double gram_distance(const Matrix& gram) {
  const Matrix target = etf_gram_target(gram.rows());
  const double nrm = gram.norm();
  if (nrm == 0.0) return target.norm();
  return (gram / nrm - target).norm();
}

}  // namespace

UfmProblem::UfmProblem(int d, int num_classes, int per_class, LossSpec spec)
    : d_(d), layout_(num_classes, per_class), spec_(spec) {
  if (d_ < 1) throw PreconditionError("UfmProblem: d must be >= 1");
  spec_.validate();
  if (spec_.kind == LossKind::kSupervisedContrastive && per_class < 2)
    throw InvalidLayoutError("UfmProblem: the SC loss needs n >= 2");
}

TangentPair TangentPair::zeros_like(const UfmState& s) {
  return {Matrix::Zero(s.w.rows(), s.w.cols()), Matrix::Zero(s.h.rows(), s.h.cols())};
}

double TangentPair::dot(const TangentPair& o) const {
  return inner(w, o.w) + inner(h, o.h);
}

double TangentPair::norm() const { return std::sqrt(dot(*this)); }

TangentPair& TangentPair::operator+=(const TangentPair& o) {
  w += o.w;
  h += o.h;
  return *this;
}

TangentPair& TangentPair::operator-=(const TangentPair& o) {
  w -= o.w;
  h -= o.h;
  return *this;
}

TangentPair& TangentPair::operator*=(double s) {
  w *= s;
  h *= s;
  return *this;
}

void check_state(const UfmProblem& problem, const UfmState& state) {
  if (state.w.rows() != problem.dim() || state.w.cols() != problem.num_classes())
    throw DimensionError("W must be " + std::to_string(problem.dim()) + "x" +
                         std::to_string(problem.num_classes()));
  if (state.h.rows() != problem.dim() || state.h.cols() != problem.num_samples())
    throw DimensionError("H must be " + std::to_string(problem.dim()) + "x" +
                         std::to_string(problem.num_samples()));
}

LocalModel local_model(const UfmProblem& problem, const UfmState& state) {
  check_state(problem, state);
  LocalModel m;
  const double tau = problem.tau();
  if (!problem.spec().has_classifier()) {
    ValueGrad vg = sc_value_grad(state.h, problem.layout(), tau);
    m.value = vg.value;
    m.gram = at_b(state.h.matrix(), state.h.matrix());
    m.euclid.w = Matrix::Zero(state.w.rows(), state.w.cols());
    m.euclid.h = std::move(vg.grad);
  } else {
    m.gram = at_b(state.w.matrix(), state.h.matrix());
    m.logits = tau * m.gram;
    ValueGrad vg = head_value_grad(problem.spec(), m.logits, problem.layout());
    m.value = vg.value;
    m.head_grad = std::move(vg.grad);
    m.euclid.w = tau * a_bt(state.h.matrix(), m.head_grad);
    m.euclid.h = tau * a_b(state.w.matrix(), m.head_grad);
  }
  m.riem.w = tangent_project(state.w, m.euclid.w).data;
  m.riem.h = tangent_project(state.h, m.euclid.h).data;
  return m;
}

ObliqueMatrix simplex_etf(int d, int num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw PreconditionError("simplex_etf: K must be >= 2");
  if (d < num_classes)
    throw InfeasibleDimensionError("simplex_etf: need d >= K (d=" + std::to_string(d) +
                                   ", K=" + std::to_string(num_classes) + ")");
  CounterRng rng(seed);
  const Matrix g = rng.gaussian_matrix(d, num_classes);
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix p = qr.householderQ() * Matrix::Identity(d, num_classes);
  Matrix center = Matrix::Identity(num_classes, num_classes);
  center.array() -= 1.0 / num_classes;
  const double scale = std::sqrt(static_cast<double>(num_classes) / (num_classes - 1));
  return ObliqueMatrix::normalized(scale * p * center);
}

UfmState nc_solution(const UfmProblem& problem, std::uint64_t seed) {
  ObliqueMatrix w = simplex_etf(problem.dim(), problem.num_classes(), seed);
  const int n = problem.per_class();
  Matrix h(problem.dim(), problem.num_samples());
  for (int k = 0; k < problem.num_classes(); ++k)
    for (int i = 0; i < n; ++i) h.col(k * n + i) = w.col(k);
  return UfmState{std::move(w), ObliqueMatrix(std::move(h))};
}

double f_value(const UfmProblem& problem, const UfmState& state) {
  check_state(problem, state);
  if (!problem.spec().has_classifier())
    return sc_value_from_gram(at_b(state.h.matrix(), state.h.matrix()),
                              problem.layout(), problem.tau());
  const Matrix m = problem.tau() * at_b(state.w.matrix(), state.h.matrix());
  return head_value(problem.spec(), m, problem.layout());
}

TangentPair riem_grad(const UfmProblem& problem, const UfmState& state) {
  return local_model(problem, state).riem;
}

double riem_hess_bilinear(const UfmProblem& problem, const UfmState& state,
                          const TangentPair& delta) {
  check_state(problem, state);
  if (!problem.spec().has_hessian())
    throw UnsupportedError("Riemannian Hessian needs the CE or label-smoothing loss");
  check_direction(state, delta);
  const double tau = problem.tau();
  const Matrix& w = state.w.matrix();
  const Matrix& h = state.h.matrix();
  const Matrix m = tau * at_b(w, h);
  const ValueGrad vg = head_value_grad(problem.spec(), m, problem.layout());
  const Matrix& g = vg.grad;

  // Euclidean part: g''(M)[dM, dM] + 2 tau <G, dW^T dH>.
  const Matrix dm = tau * (at_b(w, delta.h) + at_b(delta.w, h));
  const double second_order =
      inner(dm, head_hess_apply(problem.spec(), m, problem.layout(), dm));
  const double cross = 2.0 * tau * inner(g, at_b(delta.w, delta.h));

  // Curvature: -<dW ddiag(M G^T), dW> - <dH ddiag(M^T G), dH>.
  const Vector cw = row_dots(m, g);
  const Vector ch = column_dots(m, g);
  const Vector dw_sq = delta.w.colwise().squaredNorm().transpose();
  const Vector dh_sq = delta.h.colwise().squaredNorm().transpose();
  return second_order + cross - cw.dot(dw_sq) - ch.dot(dh_sq);
}

TangentPair riem_hess_apply(const UfmProblem& problem, const UfmState& state,
                            const LocalModel& model, const TangentPair& delta) {
  if (!problem.spec().has_hessian())
    throw UnsupportedError("Riemannian Hessian needs the CE or label-smoothing loss");
  check_direction(state, delta);
  const double tau = problem.tau();
  const Matrix& w = state.w.matrix();
  const Matrix& h = state.h.matrix();
  const Matrix& g = model.head_grad;

  const Matrix dm = tau * (at_b(w, delta.h) + at_b(delta.w, h));
  const Matrix dg = head_hess_apply(problem.spec(), model.logits, problem.layout(), dm);

  // D(euclidean gradient)[delta].
  Matrix hw = tau * (a_bt(delta.h, g) + a_bt(h, dg));
  Matrix hh = tau * (a_b(delta.w, g) + a_b(w, dg));

  // Subtract delta ddiag(X^T grad f), then project.
  hw -= delta.w * column_dots(w, model.euclid.w).asDiagonal();
  hh -= delta.h * column_dots(h, model.euclid.h).asDiagonal();
  return {tangent_project(state.w, hw).data, tangent_project(state.h, hh).data};
}

TangentPair riem_hess_apply(const UfmProblem& problem, const UfmState& state,
                            const TangentPair& delta) {
  return riem_hess_apply(problem, state, local_model(problem, state), delta);
}

AlphaBeta alpha_beta(const UfmProblem& problem, const UfmState& state,
                     const LocalModel& model) {
  require_classifier(problem, "alpha_beta");
  (void)state;
  return {row_dots(model.gram, model.head_grad), column_dots(model.gram, model.head_grad)};
}

AlphaBeta alpha_beta(const UfmProblem& problem, const UfmState& state) {
  require_classifier(problem, "alpha_beta");
  return alpha_beta(problem, state, local_model(problem, state));
}

bool is_critical(const UfmProblem& problem, const UfmState& state, double tol) {
  const TangentPair g = riem_grad(problem, state);
  return g.w.norm() + g.h.norm() <= tol;
}

bool global_certificate(const UfmProblem& problem, const UfmState& state, double tol) {
  require_classifier(problem, "global_certificate");
  const LocalModel model = local_model(problem, state);
  const double gnorm = model.riem.w.norm() + model.riem.h.norm();
  if (!(gnorm <= tol))
    throw PreconditionError("global_certificate: state is not critical (gradient norm " +
                            std::to_string(gnorm) + ")");
  const AlphaBeta ab = alpha_beta(problem, state, model);
  const double sigma = top_singular_pair(model.head_grad, 50, 1e-10).sigma;
  const double sqrt_n = std::sqrt(static_cast<double>(problem.per_class()));
  return ab.alpha.maxCoeff() <= -sqrt_n * sigma + tol &&
         ab.beta.maxCoeff() <= -sigma / sqrt_n + tol;
}

double global_lower_bound(int num_classes, double tau) {
  const double k = num_classes;
  return std::log1p((k - 1.0) * std::exp(-k * tau / (k - 1.0)));
}

double ls_nc_value(int num_classes, double tau, double alpha) {
  return global_lower_bound(num_classes, tau) + alpha * tau;
}

double ls_constant_value(int num_classes) { return std::log(static_cast<double>(num_classes)); }

double tau_bound(int d, int num_classes) {
  const double parity = static_cast<double>(num_classes % 2) / num_classes;
  return 2.0 * (d - 2) / (1.0 + parity);
}

NcMetrics nc_metrics(const Matrix& w, const Matrix& h, const LabelLayout& layout) {
  const int k = layout.num_classes();
  const int n = layout.per_class();
  if (h.cols() != layout.num_samples()) throw DimensionError("nc_metrics: H width");
  const Eigen::Index d = h.rows();

  Matrix means(d, k);
  for (int c = 0; c < k; ++c) means.col(c) = h.middleCols(c * n, n).rowwise().mean();
  const Vector global = means.rowwise().mean();

  Matrix within(d, h.cols());
  for (Eigen::Index i = 0; i < h.cols(); ++i)
    within.col(i) = h.col(i) - means.col(layout.class_of(static_cast<int>(i)));
  const Matrix between = means.colwise() - global;

  // Sigma_B = B B^T / K; its eigenpairs come from the thin SVD of B.
  NcMetrics out;
  Eigen::JacobiSVD<Matrix> svd(between, Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  const double lambda_max = s.size() > 0 ? s(0) * s(0) / k : 0.0;
  double trace = 0.0;
  if (lambda_max > 0.0) {
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      const double lambda = s(j) * s(j) / k;
      if (lambda < 1e-10 * lambda_max) continue;
      const Vector proj = within.transpose() * svd.matrixU().col(j);
      trace += proj.squaredNorm() / static_cast<double>(h.cols()) / lambda;
    }
  }
  out.nc1 = trace / k;

  if (w.size() == 0) {
    out.nc2 = gram_distance(means.transpose() * means);
    out.nc3 = std::numeric_limits<double>::quiet_NaN();
  } else {
    if (w.rows() != d || w.cols() != k) throw DimensionError("nc_metrics: W shape");
    out.nc2 = gram_distance(w.transpose() * w);
    out.nc3 = gram_distance(w.transpose() * means);
  }
  return out;
}

NcMetrics nc_metrics(const UfmProblem& problem, const UfmState& state) {
  check_state(problem, state);
  if (!problem.spec().has_classifier())
    return nc_metrics(Matrix(), state.h.matrix(), problem.layout());
  return nc_metrics(state.w.matrix(), state.h.matrix(), problem.layout());
}

double train_accuracy(const Matrix& logits, const LabelLayout& layout) {
  if (logits.cols() != layout.num_samples() || logits.rows() != layout.num_classes())
    throw DimensionError("train_accuracy: logits shape");
  int correct = 0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.rows(); ++k)
      if (logits(k, i) > logits(best, i)) best = k;
    if (best == layout.class_of(static_cast<int>(i))) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.cols());
}

double train_accuracy(const UfmProblem& problem, const UfmState& state) {
  require_classifier(problem, "train_accuracy");
  check_state(problem, state);
  return train_accuracy(problem.tau() * at_b(state.w.matrix(), state.h.matrix()),
                        problem.layout());
}

}  // namespace obnc
