#pragma once

// Head losses g(M) on the logit matrix M = tau W^T H (K x N, one column per
// sample), and the supervised-contrastive loss on H directly. All values
// carry the 1/N sample average.

#include <string>

#include "obnc/linalg.hpp"
#include "obnc/manifold.hpp"

namespace obnc {

/// Block label layout: columns [class 0 x n | class 1 x n | ...].
class LabelLayout {
 public:
  /// Throws InvalidLayoutError unless K >= 2 and n >= 1.
  LabelLayout(int num_classes, int per_class);

  int num_classes() const { return k_; }
  int per_class() const { return n_; }
  int num_samples() const { return k_ * n_; }
  int class_of(int column) const { return column / n_; }

 private:
  int k_;
  int n_;
};

enum class LossKind { kCrossEntropy, kFocal, kLabelSmoothing, kSupervisedContrastive };

/// Loss kind, its parameter (gamma for focal, alpha for label smoothing,
/// unused otherwise) and the temperature tau.
struct LossSpec {
  LossKind kind = LossKind::kCrossEntropy;
  double param = 0.0;
  double tau = 1.0;

  static LossSpec cross_entropy(double tau);
  static LossSpec focal(double gamma, double tau);
  static LossSpec label_smoothing(double alpha, double tau);
  static LossSpec supervised_contrastive(double tau);

  /// Throws PreconditionError on tau < 0, gamma < 0 or alpha outside [0, 1].
  void validate() const;

  /// True for losses defined on logits (everything except SC).
  bool has_classifier() const { return kind != LossKind::kSupervisedContrastive; }
  /// True when head_hess_apply is available.
  bool has_hessian() const {
    return kind == LossKind::kCrossEntropy || kind == LossKind::kLabelSmoothing;
  }
};

/// "ce", "focal", "ls", "sc".
std::string loss_name(LossKind kind);
/// Inverse of loss_name; throws PreconditionError on unknown names.
LossKind parse_loss_kind(const std::string& name);

struct ValueGrad {
  double value = 0.0;
  Matrix grad;
};

/// Max-shifted softmax. Throws NumericError on non-finite input.
Vector softmax(const Vector& z);

ValueGrad ce_value_grad(const Matrix& m, const LabelLayout& layout);
/// Column i: (diag(eta_i) - eta_i eta_i^T) d_i / N.
Matrix ce_hess_apply(const Matrix& m, const LabelLayout& layout, const Matrix& d);

ValueGrad focal_value_grad(const Matrix& m, const LabelLayout& layout, double gamma);
ValueGrad label_smoothing_value_grad(const Matrix& m, const LabelLayout& layout,
                                     double alpha);

/// Value and Euclidean gradient w.r.t. H. Requires n >= 2.
ValueGrad sc_value_grad(const ObliqueMatrix& h, const LabelLayout& layout, double tau);
/// SC value from the feature Gram matrix S = H^T H.
double sc_value_from_gram(const Matrix& gram, const LabelLayout& layout, double tau);

/// Dispatch on a CE-family spec (not SC): value only / value and gradient /
/// Hessian-direction product of g at M.
double head_value(const LossSpec& spec, const Matrix& m, const LabelLayout& layout);
ValueGrad head_value_grad(const LossSpec& spec, const Matrix& m,
                          const LabelLayout& layout);
Matrix head_hess_apply(const LossSpec& spec, const Matrix& m,
                       const LabelLayout& layout, const Matrix& d);

}  // namespace obnc
