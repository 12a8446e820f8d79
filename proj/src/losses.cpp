#include "obnc/losses.hpp"

#include <cmath>
#include <limits>

#include "obnc/errors.hpp"

namespace obnc {
namespace {

void check_logits(const Matrix& m, const LabelLayout& layout, const char* who) {
  if (m.rows() != layout.num_classes() || m.cols() != layout.num_samples())
    throw DimensionError(std::string(who) + ": logits are " + std::to_string(m.rows()) +
                         "x" + std::to_string(m.cols()) + ", layout needs " +
                         std::to_string(layout.num_classes()) + "x" +
                         std::to_string(layout.num_samples()));
  if (!m.allFinite()) throw NumericError(std::string(who) + ": non-finite logits");
}

// Writes softmax of column z into p and returns log-sum-exp.
double softmax_lse(const double* z, double* p, Eigen::Index k) {
  double mx = z[0];
  for (Eigen::Index j = 1; j < k; ++j) mx = std::max(mx, z[j]);
  double s = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    p[j] = std::exp(z[j] - mx);
    s += p[j];
  }
  for (Eigen::Index j = 0; j < k; ++j) p[j] /= s;
  return mx + std::log(s);
}

double lse_only(const double* z, Eigen::Index k) {
  double mx = z[0];
  for (Eigen::Index j = 1; j < k; ++j) mx = std::max(mx, z[j]);
  double s = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) s += std::exp(z[j] - mx);
  return mx + std::log(s);
}

// Target weights of label smoothing: 1 - (K-1) alpha / K on the true class,
// alpha / K elsewhere.
struct SmoothTarget {
  double on;
  double off;
};

SmoothTarget smooth_target(int k, double alpha) {
  return {1.0 - (k - 1) * alpha / k, alpha / k};
}

double ce_value(const Matrix& m, const LabelLayout& layout) {
  const Eigen::Index k = m.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < m.cols(); ++i) {
    const double* z = m.col(i).data();
    total += lse_only(z, k) - z[layout.class_of(static_cast<int>(i))];
  }
  return total / static_cast<double>(m.cols());
}

double ls_value(const Matrix& m, const LabelLayout& layout, double alpha) {
  const Eigen::Index k = m.rows();
  const SmoothTarget t = smooth_target(static_cast<int>(k), alpha);
  double total = 0.0;
  for (Eigen::Index i = 0; i < m.cols(); ++i) {
    const double* z = m.col(i).data();
    const int y = layout.class_of(static_cast<int>(i));
    double tz = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) tz += (j == y ? t.on : t.off) * z[j];
    total += lse_only(z, k) - tz;
  }
  return total / static_cast<double>(m.cols());
}

// Per-sample focal loss and its derivative factor c with
// dL/dz = (e_y - p) * c.
struct FocalTerms {
  double loss;
  double factor;
};

FocalTerms focal_terms(const double* z, const double* p, double lse, int y,
                       Eigen::Index k, double gamma) {
  const double log_q = z[y] - lse;
  double one_minus_q = 0.0;
  for (Eigen::Index j = 0; j < k; ++j)
    if (j != y) one_minus_q += p[j];
  if (gamma == 0.0) return {-log_q, -1.0};
  const double w = std::pow(one_minus_q, gamma);
  double slope = 0.0;  // gamma (1-q)^(gamma-1) q log q, -> 0 as q -> 1
  if (one_minus_q > 0.0)
    slope = gamma * std::pow(one_minus_q, gamma - 1.0) * p[y] * log_q;
  return {-w * log_q, slope - w};
}

double focal_value(const Matrix& m, const LabelLayout& layout, double gamma) {
  const Eigen::Index k = m.rows();
  Vector p(k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < m.cols(); ++i) {
    const double* z = m.col(i).data();
    const double lse = softmax_lse(z, p.data(), k);
    total += focal_terms(z, p.data(), lse, layout.class_of(static_cast<int>(i)), k,
                         gamma)
                 .loss;
  }
  return total / static_cast<double>(m.cols());
}

void check_sc(const LabelLayout& layout, Eigen::Index n_cols) {
  if (layout.per_class() < 2)
    throw InvalidLayoutError("supervised contrastive loss needs n >= 2");
  if (n_cols != layout.num_samples())
    throw DimensionError("sc: feature count does not match layout");
}

}  // namespace

LabelLayout::LabelLayout(int num_classes, int per_class)
    : k_(num_classes), n_(per_class) {
  if (k_ < 2) throw InvalidLayoutError("LabelLayout: K must be >= 2");
  if (n_ < 1) throw InvalidLayoutError("LabelLayout: n must be >= 1");
}

LossSpec LossSpec::cross_entropy(double tau) {
  return {LossKind::kCrossEntropy, 0.0, tau};
}
LossSpec LossSpec::focal(double gamma, double tau) { return {LossKind::kFocal, gamma, tau}; }
LossSpec LossSpec::label_smoothing(double alpha, double tau) {
  return {LossKind::kLabelSmoothing, alpha, tau};
}
LossSpec LossSpec::supervised_contrastive(double tau) {
  return {LossKind::kSupervisedContrastive, 0.0, tau};
}

void LossSpec::validate() const {
  if (!(tau >= 0.0) || !std::isfinite(tau))
    throw PreconditionError("tau must be finite and >= 0");
  if (kind == LossKind::kFocal && !(param >= 0.0))
    throw PreconditionError("focal gamma must be >= 0");
  if (kind == LossKind::kLabelSmoothing && !(param >= 0.0 && param <= 1.0))
    throw PreconditionError("label smoothing alpha must lie in [0, 1]");
}

std::string loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::kCrossEntropy: return "ce";
    case LossKind::kFocal: return "focal";
    case LossKind::kLabelSmoothing: return "ls";
    case LossKind::kSupervisedContrastive: return "sc";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "ce") return LossKind::kCrossEntropy;
  if (name == "focal") return LossKind::kFocal;
  if (name == "ls") return LossKind::kLabelSmoothing;
  if (name == "sc") return LossKind::kSupervisedContrastive;
  throw PreconditionError("unknown loss '" + name + "' (expected ce, focal, ls or sc)");
}

Vector softmax(const Vector& z) {
  if (z.size() == 0) throw DimensionError("softmax: empty input");
  if (!z.allFinite()) throw NumericError("softmax: non-finite input");
  Vector p(z.size());
  softmax_lse(z.data(), p.data(), z.size());
  return p;
}

ValueGrad ce_value_grad(const Matrix& m, const LabelLayout& layout) {
  check_logits(m, layout, "ce_value_grad");
  const Eigen::Index k = m.rows();
  const double inv_n = 1.0 / static_cast<double>(m.cols());
  ValueGrad out{0.0, Matrix(k, m.cols())};
  double total = 0.0;
  for (Eigen::Index i = 0; i < m.cols(); ++i) {
    const double* z = m.col(i).data();
    double* g = out.grad.col(i).data();
    const int y = layout.class_of(static_cast<int>(i));
    total += softmax_lse(z, g, k) - z[y];
    g[y] -= 1.0;
    for (Eigen::Index j = 0; j < k; ++j) g[j] *= inv_n;
  }
  out.value = total * inv_n;
  return out;
}

Matrix ce_hess_apply(const Matrix& m, const LabelLayout& layout, const Matrix& d) {
  check_logits(m, layout, "ce_hess_apply");
  if (d.rows() != m.rows() || d.cols() != m.cols())
    throw DimensionError("ce_hess_apply: direction shape mismatch");
  const Eigen::Index k = m.rows();
  const double inv_n = 1.0 / static_cast<double>(m.cols());
  Matrix out(k, m.cols());
  Vector p(k);
  for (Eigen::Index i = 0; i < m.cols(); ++i) {
    softmax_lse(m.col(i).data(), p.data(), k);
    const double pd = p.dot(d.col(i));
    for (Eigen::Index j = 0; j < k; ++j)
      out(j, i) = p(j) * (d(j, i) - pd) * inv_n;
  }
  return out;
}

ValueGrad focal_value_grad(const Matrix& m, const LabelLayout& layout, double gamma) {
  check_logits(m, layout, "focal_value_grad");
  if (!(gamma >= 0.0)) throw PreconditionError("focal: gamma must be >= 0");
  const Eigen::Index k = m.rows();
  const double inv_n = 1.0 / static_cast<double>(m.cols());
  ValueGrad out{0.0, Matrix(k, m.cols())};
  Vector p(k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < m.cols(); ++i) {
    const double* z = m.col(i).data();
    const int y = layout.class_of(static_cast<int>(i));
    const double lse = softmax_lse(z, p.data(), k);
    const FocalTerms t = focal_terms(z, p.data(), lse, y, k, gamma);
    total += t.loss;
    for (Eigen::Index j = 0; j < k; ++j)
      out.grad(j, i) = ((j == y ? 1.0 : 0.0) - p(j)) * t.factor * inv_n;
  }
  out.value = total * inv_n;
  return out;
}

ValueGrad label_smoothing_value_grad(const Matrix& m, const LabelLayout& layout,
                                     double alpha) {
  check_logits(m, layout, "label_smoothing_value_grad");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw PreconditionError("label smoothing: alpha must lie in [0, 1]");
  const Eigen::Index k = m.rows();
  const SmoothTarget t = smooth_target(static_cast<int>(k), alpha);
  const double inv_n = 1.0 / static_cast<double>(m.cols());
  ValueGrad out{0.0, Matrix(k, m.cols())};
  double total = 0.0;
  for (Eigen::Index i = 0; i < m.cols(); ++i) {
    const double* z = m.col(i).data();
    double* g = out.grad.col(i).data();
    const int y = layout.class_of(static_cast<int>(i));
    const double lse = softmax_lse(z, g, k);
    double tz = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double tj = (j == y ? t.on : t.off);
      tz += tj * z[j];
      g[j] = (g[j] - tj) * inv_n;
    }
    total += lse - tz;
  }
  out.value = total * inv_n;
  return out;
}

double sc_value_from_gram(const Matrix& gram, const LabelLayout& layout, double tau) {
  check_sc(layout, gram.cols());
  if (gram.rows() != gram.cols()) throw DimensionError("sc: Gram must be square");
  const Eigen::Index n_total = gram.cols();
  const int n = layout.per_class();
  const double t2 = tau * tau;
  double lse_sum = 0.0;
  double pos_sum = 0.0;
  for (Eigen::Index i = 0; i < n_total; ++i) {
    const int yi = layout.class_of(static_cast<int>(i));
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < n_total; ++l)
      if (l != i) mx = std::max(mx, t2 * gram(l, i));
    double s = 0.0;
    for (Eigen::Index l = 0; l < n_total; ++l)
      if (l != i) s += std::exp(t2 * gram(l, i) - mx);
    lse_sum += mx + std::log(s);
    for (Eigen::Index j = static_cast<Eigen::Index>(yi) * n;
         j < static_cast<Eigen::Index>(yi + 1) * n; ++j)
      if (j != i) pos_sum += t2 * gram(j, i);
  }
  const double inv_n = 1.0 / static_cast<double>(n_total);
  return lse_sum * inv_n - pos_sum * inv_n / (n - 1);
}

ValueGrad sc_value_grad(const ObliqueMatrix& h, const LabelLayout& layout, double tau) {
  check_sc(layout, h.cols());
  const Matrix gram = at_b(h.matrix(), h.matrix());
  const Eigen::Index n_total = gram.cols();
  const int n = layout.per_class();
  const double t2 = tau * tau;
  const double inv_n = 1.0 / static_cast<double>(n_total);

  // coef(l, i) = d value / d S(l, i), treating S entries as independent.
  Matrix coef = Matrix::Zero(n_total, n_total);
  for (Eigen::Index i = 0; i < n_total; ++i) {
    const int yi = layout.class_of(static_cast<int>(i));
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < n_total; ++l)
      if (l != i) mx = std::max(mx, t2 * gram(l, i));
    double s = 0.0;
    for (Eigen::Index l = 0; l < n_total; ++l)
      if (l != i) {
        coef(l, i) = std::exp(t2 * gram(l, i) - mx);
        s += coef(l, i);
      }
    for (Eigen::Index l = 0; l < n_total; ++l)
      if (l != i) {
        coef(l, i) *= t2 * inv_n / s;
        if (layout.class_of(static_cast<int>(l)) == yi)
          coef(l, i) -= t2 * inv_n / (n - 1);
      }
  }
  ValueGrad out;
  out.value = sc_value_from_gram(gram, layout, tau);
  const Matrix sym = coef + coef.transpose();
  out.grad = a_b(h.matrix(), sym);
  return out;
}

double head_value(const LossSpec& spec, const Matrix& m, const LabelLayout& layout) {
  check_logits(m, layout, "head_value");
  switch (spec.kind) {
    case LossKind::kCrossEntropy: return ce_value(m, layout);
    case LossKind::kFocal: return focal_value(m, layout, spec.param);
    case LossKind::kLabelSmoothing: return ls_value(m, layout, spec.param);
    case LossKind::kSupervisedContrastive: break;
  }
  throw UnsupportedError("head_value: SC loss has no logit head");
}

ValueGrad head_value_grad(const LossSpec& spec, const Matrix& m,
                          const LabelLayout& layout) {
  switch (spec.kind) {
    case LossKind::kCrossEntropy: return ce_value_grad(m, layout);
    case LossKind::kFocal: return focal_value_grad(m, layout, spec.param);
    case LossKind::kLabelSmoothing:
      return label_smoothing_value_grad(m, layout, spec.param);
    case LossKind::kSupervisedContrastive: break;
  }
  throw UnsupportedError("head_value_grad: SC loss has no logit head");
}

Matrix head_hess_apply(const LossSpec& spec, const Matrix& m, const LabelLayout& layout,
                       const Matrix& d) {
  // Label smoothing is log-sum-exp minus a linear term, so its Hessian is CE's.
  if (spec.has_hessian()) return ce_hess_apply(m, layout, d);
  throw UnsupportedError("Hessian is available for CE and label smoothing only, not " +
                         loss_name(spec.kind));
}

}  // namespace obnc
