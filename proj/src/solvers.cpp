#include "obnc/solvers.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "obnc/rng.hpp"

namespace obnc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double grad_norm(const TangentPair& g) { return g.w.norm() + g.h.norm(); }

// log of the squared column norm of x + t v, given <x, v> and ‖v‖^2 (‖x‖ = 1).
double log_norm2(double xv, double vv, double t) {
  const double arg = t * (2.0 * xv + t * vv);
  if (!(arg > -1.0)) return -kInf;
  return std::log1p(arg);
}

}  // namespace

// ---------------------------------------------------------------- config --

void SolverConfig::validate() const {
  if (max_iters < 1) throw PreconditionError("solver: max_iters must be >= 1");
  if (!(grad_tol > 0.0)) throw PreconditionError("solver: grad_tol must be > 0");
  if (!(line_search.tol > 0.0) || !(line_search.bracket_max > 0.0))
    throw PreconditionError("solver: line search tol and bracket_max must be > 0");
  if (line_search.max_expansions < 1)
    throw PreconditionError("solver: line search needs max_expansions >= 1");
  if (cg_restart < 1) throw PreconditionError("solver: cg_restart must be >= 1");
  if (!(0.0 < tr.eta1 && tr.eta1 < tr.eta2 && tr.eta2 < 1.0))
    throw PreconditionError("solver: need 0 < eta1 < eta2 < 1");
  if (!(tr.shrink > 0.0 && tr.shrink < 1.0) || !(tr.grow > 1.0))
    throw PreconditionError("solver: need 0 < shrink < 1 < grow");
  if (record_every < 1) throw PreconditionError("solver: record_every must be >= 1");
}

std::string status_name(SolverStatus s) {
  switch (s) {
    case SolverStatus::kConverged: return "converged";
    case SolverStatus::kMaxIters: return "max_iters";
    case SolverStatus::kStepFailure: return "step_failure";
    case SolverStatus::kDiverged: return "diverged";
  }
  return "unknown";
}

// ---------------------------------------------------------- ray evaluator --

RayEvaluator::RayEvaluator(const UfmProblem& problem, const UfmState& state,
                           const TangentPair& dir)
    : problem_(problem) {
  check_state(problem, state);
  const Matrix& h = state.h.matrix();
  xv_h_ = column_dots(h, dir.h);
  vv_h_ = dir.h.colwise().squaredNorm().transpose();
  const double t2 = problem.tau() * problem.tau();

  if (!problem.spec().has_classifier()) {
    a_ = at_b(h, h);
    const Matrix c = at_b(h, dir.h);
    b_ = c + c.transpose();
    c_ = at_b(dir.h, dir.h);
    const Eigen::Index n_total = a_.cols();
    prob_ = Matrix::Zero(n_total, n_total);
    for (Eigen::Index i = 0; i < n_total; ++i) {
      double mx = -kInf;
      for (Eigen::Index l = 0; l < n_total; ++l)
        if (l != i) mx = std::max(mx, t2 * a_(l, i));
      double s = 0.0;
      for (Eigen::Index l = 0; l < n_total; ++l)
        if (l != i) s += (prob_(l, i) = std::exp(t2 * a_(l, i) - mx));
      prob_.col(i) /= s;
    }
    return;
  }

  const Matrix& w = state.w.matrix();
  xv_w_ = column_dots(w, dir.w);
  vv_w_ = dir.w.colwise().squaredNorm().transpose();
  a_ = at_b(w, h);
  b_ = at_b(w, dir.h) + at_b(dir.w, h);
  c_ = at_b(dir.w, dir.h);
  const Matrix logits = problem.tau() * a_;
  if (problem.spec().kind == LossKind::kFocal) {
    f0_ = head_value(problem.spec(), logits, problem.layout());
    return;
  }
  prob_.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) prob_.col(i) = softmax(logits.col(i));
}

double RayEvaluator::delta(double t) const {
  if (t == 0.0) return 0.0;
  return problem_.spec().has_classifier() ? delta_head(t) : delta_sc(t);
}

double RayEvaluator::delta_head(double t) const {
  const Eigen::Index k = a_.rows();
  const Eigen::Index n_total = a_.cols();
  const double tau = problem_.tau();
  const LabelLayout& layout = problem_.layout();

  Vector lw(k), lh(n_total);
  for (Eigen::Index j = 0; j < k; ++j) lw(j) = log_norm2(xv_w_(j), vv_w_(j), t);
  for (Eigen::Index i = 0; i < n_total; ++i) lh(i) = log_norm2(xv_h_(i), vv_h_(i), t);
  if (!std::isfinite(lw.sum()) || !std::isfinite(lh.sum())) return kInf;

  // Logit change dM = tau (A (s - 1) + s (t B + t^2 C)), s = 1 / (‖w_k(t)‖ ‖h_i(t)‖).
  Matrix dm(k, n_total);
  for (Eigen::Index i = 0; i < n_total; ++i)
    for (Eigen::Index j = 0; j < k; ++j) {
      const double sm1 = std::expm1(-0.5 * (lw(j) + lh(i)));
      dm(j, i) = tau * (a_(j, i) * sm1 + (1.0 + sm1) * t * (b_(j, i) + t * c_(j, i)));
    }

  const LossSpec& spec = problem_.spec();
  if (spec.kind == LossKind::kFocal) {
    const Matrix m = tau * a_ + dm;
    return head_value(spec, m, layout) - f0_;
  }

  double on = 1.0, off = 0.0;
  if (spec.kind == LossKind::kLabelSmoothing) {
    on = 1.0 - (k - 1) * spec.param / k;
    off = spec.param / k;
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < n_total; ++i) {
    const int y = layout.class_of(static_cast<int>(i));
    double acc = 0.0, lin = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      acc += prob_(j, i) * std::expm1(dm(j, i));
      lin += (j == y ? on : off) * dm(j, i);
    }
    total += std::log1p(acc) - lin;
  }
  return total / static_cast<double>(n_total);
}

double RayEvaluator::delta_sc(double t) const {
  const Eigen::Index n_total = a_.cols();
  const int n = problem_.per_class();
  const double t2 = problem_.tau() * problem_.tau();
  const LabelLayout& layout = problem_.layout();

  Vector lh(n_total);
  for (Eigen::Index i = 0; i < n_total; ++i) lh(i) = log_norm2(xv_h_(i), vv_h_(i), t);
  if (!std::isfinite(lh.sum())) return kInf;

  double total = 0.0;
  for (Eigen::Index i = 0; i < n_total; ++i) {
    const int yi = layout.class_of(static_cast<int>(i));
    double acc = 0.0, pos = 0.0;
    for (Eigen::Index l = 0; l < n_total; ++l) {
      if (l == i) continue;
      const double sm1 = std::expm1(-0.5 * (lh(i) + lh(l)));
      const double ds = a_(l, i) * sm1 + (1.0 + sm1) * t * (b_(l, i) + t * c_(l, i));
      acc += prob_(l, i) * std::expm1(t2 * ds);
      if (layout.class_of(static_cast<int>(l)) == yi) pos += ds;
    }
    total += std::log1p(acc) - t2 * pos / (n - 1);
  }
  return total / static_cast<double>(n_total);
}

// ------------------------------------------------------------ line search --

namespace {

struct LineSearchResult {
  bool ok = false;
  double t = 0.0;
  double delta = 0.0;
};

// Bracket a minimizer of phi on (0, inf) by doubling (or halving) from t0,
// then golden-section down to a relative width of cfg.tol.
LineSearchResult golden_line_search(const RayEvaluator& ray, double t0,
                                    const LineSearchConfig& cfg) {
  LineSearchResult best;
  auto eval = [&](double t) {
    const double v = ray.delta(t);
    if (v < best.delta) best = {true, t, v};
    return v;
  };

  double lo = 0.0, mid = t0, hi;
  double fmid = eval(mid), fhi;
  int expansions = 0;
  if (!(fmid < 0.0)) {
    hi = mid;
    for (;;) {
      if (++expansions > cfg.max_expansions) return {};
      mid = 0.5 * hi;
      fmid = eval(mid);
      if (fmid < 0.0) break;
      hi = mid;
    }
  } else {
    hi = 2.0 * mid;
    fhi = eval(hi);
    while (fhi < fmid) {
      if (++expansions > cfg.max_expansions) return {};
      lo = mid;
      mid = hi;
      fmid = fhi;
      hi *= 2.0;
      fhi = eval(hi);
    }
  }

  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = eval(c), fd = eval(d);
  while (b - a > cfg.tol * b) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = eval(d);
    }
  }
  return best;
}

UfmState retract_pair(const UfmState& x, const TangentPair& v, double t) {
  return UfmState{retract(x.w, v.w, t), retract(x.h, v.h, t)};
}

class Recorder {
 public:
  Recorder(const UfmProblem& problem, const SolverConfig& config,
           std::vector<TraceRecord>& out)
      : problem_(problem), config_(config), out_(out), start_(Clock::now()) {}

  void record(int iter, const UfmState& state, const LocalModel& model, bool force) {
    if (!force && iter % config_.record_every != 0) return;
    if (!out_.empty() && out_.back().iter == iter) return;
    TraceRecord r;
    r.iter = iter;
    r.f = model.value;
    r.grad_norm = grad_norm(model.riem);
    if (config_.record_metrics) {
      const NcMetrics nc = nc_metrics(problem_, state);
      r.nc1 = nc.nc1;
      r.nc2 = nc.nc2;
      r.nc3 = nc.nc3;
      r.accuracy = problem_.spec().has_classifier()
                       ? train_accuracy(model.logits, problem_.layout())
                       : kNaN;
    } else {
      r.nc1 = r.nc2 = r.nc3 = r.accuracy = kNaN;
    }
    r.elapsed_ms = ms_since(start_);
    out_.push_back(r);
  }

 private:
  const UfmProblem& problem_;
  const SolverConfig& config_;
  std::vector<TraceRecord>& out_;
  Clock::time_point start_;
};

// Shared driver for the two line-search methods; `cg` toggles PR+ directions.
SolverTrace line_search_method(const UfmProblem& problem, const UfmState& init,
                               const SolverConfig& config, bool cg) {
  config.validate();
  check_state(problem, init);
  SolverTrace trace(init);
  Recorder rec(problem, config, trace.records);

  UfmState x = init;
  LocalModel model = local_model(problem, x);
  TangentPair dir;
  double step = config.line_search.bracket_max;
  int since_restart = 0;
  rec.record(0, x, model, true);

  int it = 0;
  for (;;) {
    if (grad_norm(model.riem) <= config.grad_tol) {
      trace.converged = true;
      trace.status = SolverStatus::kConverged;
      break;
    }
    if (it >= config.max_iters) break;

    if (!cg || since_restart == 0 || since_restart >= config.cg_restart) {
      dir = -1.0 * model.riem;
      since_restart = 0;
    }
    const RayEvaluator ray(problem, x, dir);
    const LineSearchResult ls = golden_line_search(ray, step, config.line_search);
    if (!ls.ok) {
      trace.status = SolverStatus::kStepFailure;
      trace.message = "line search found no decrease within " +
                      std::to_string(config.line_search.max_expansions) + " expansions";
      break;
    }
    step = ls.t;
    UfmState next = retract_pair(x, dir, ls.t);
    LocalModel next_model = local_model(problem, next);
    ++it;
    ++trace.accepted_steps;

    if (cg) {
      // PR+ with transport by projection onto the new tangent space.
      const TangentPair old_grad{tangent_project(next.w, model.riem.w).data,
                                 tangent_project(next.h, model.riem.h).data};
      const TangentPair old_dir{tangent_project(next.w, dir.w).data,
                                tangent_project(next.h, dir.h).data};
      const double gg = model.riem.dot(model.riem);
      const double beta =
          std::max(0.0, next_model.riem.dot(next_model.riem - old_grad) / gg);
      dir = beta * old_dir - next_model.riem;
      ++since_restart;
      if (!(dir.dot(next_model.riem) < 0.0)) since_restart = 0;
    }
    x = std::move(next);
    model = std::move(next_model);
    rec.record(it, x, model, false);
  }
  trace.iterations = it;
  rec.record(it, x, model, true);
  trace.final_state = std::move(x);
  return trace;
}

}  // namespace

SolverTrace rgd(const UfmProblem& problem, const UfmState& init, const SolverConfig& config) {
  return line_search_method(problem, init, config, false);
}

SolverTrace rcg(const UfmProblem& problem, const UfmState& init, const SolverConfig& config) {
  return line_search_method(problem, init, config, true);
}

// ----------------------------------------------------------- trust region --

namespace {

struct TcgResult {
  TangentPair eta;
  TangentPair heta;
  bool boundary = false;
  int inner = 0;
};

// Steihaug truncated CG on m(eta) = <g, eta> + 1/2 <eta, H eta>, ‖eta‖ <= radius.
template <typename Hess>
TcgResult truncated_cg(const TangentPair& g, const Hess& hess, double radius, int max_inner,
                       double kappa) {
  TcgResult out;
  out.eta = 0.0 * g;
  out.heta = out.eta;
  TangentPair r = g;
  TangentPair delta = -1.0 * r;
  double rr = r.dot(r);
  const double r0 = std::sqrt(rr);
  const double r2 = radius * radius;
  double ee = 0.0;
  for (int j = 0; j < max_inner; ++j) {
    out.inner = j + 1;
    const TangentPair hd = hess(delta);
    const double dhd = delta.dot(hd);
    const double ed = out.eta.dot(delta);
    const double dd = delta.dot(delta);
    const double alpha = rr / dhd;
    const double ee_new = ee + 2.0 * alpha * ed + alpha * alpha * dd;
    if (!(dhd > 0.0) || ee_new >= r2) {
      const double t = (-ed + std::sqrt(ed * ed + dd * (r2 - ee))) / dd;
      out.eta += t * delta;
      out.heta += t * hd;
      out.boundary = true;
      return out;
    }
    out.eta += alpha * delta;
    out.heta += alpha * hd;
    ee = ee_new;
    r += alpha * hd;
    const double rr_new = r.dot(r);
    if (std::sqrt(rr_new) <= r0 * std::min(r0, kappa)) break;
    delta = (rr_new / rr) * delta - r;
    rr = rr_new;
  }
  return out;
}

}  // namespace

SolverTrace rtr(const UfmProblem& problem, const UfmState& init, const SolverConfig& config) {
  config.validate();
  check_state(problem, init);
  if (!problem.spec().has_hessian())
    throw UnsupportedError("rtr needs a loss with a Hessian (ce or ls), not " +
                           loss_name(problem.spec().kind));
  SolverTrace trace(init);
  Recorder rec(problem, config, trace.records);

  const double parts = problem.num_classes() + problem.num_samples();
  const double radius_max =
      config.tr.radius_max > 0.0 ? config.tr.radius_max : M_PI * std::sqrt(parts);
  double radius = config.tr.radius0 > 0.0 ? config.tr.radius0 : radius_max / 8.0;
  radius = std::min(radius, radius_max);
  const int max_inner = config.tr.max_inner > 0
                            ? config.tr.max_inner
                            : (problem.dim() - 1) * static_cast<int>(parts);

  // Fixed ambient probe for the operator symmetry check.
  CounterRng rng(derive_seed(config.seed, {0x7a11}));
  const Matrix probe_w = rng.gaussian_matrix(problem.dim(), problem.num_classes());
  const Matrix probe_h = rng.gaussian_matrix(problem.dim(), problem.num_samples());

  UfmState x = init;
  LocalModel model = local_model(problem, x);
  rec.record(0, x, model, true);

  int it = 0;
  for (;;) {
    if (grad_norm(model.riem) <= config.grad_tol) {
      trace.converged = true;
      trace.status = SolverStatus::kConverged;
      break;
    }
    if (it >= config.max_iters) break;

    auto hess = [&](const TangentPair& v) { return riem_hess_apply(problem, x, model, v); };

    // Reproject after scaling: near convergence the gradient is tiny and
    // normalizing it would amplify its rounding-level normal component.
    TangentPair p1 = model.riem;
    p1 *= 1.0 / p1.norm();
    p1 = TangentPair{tangent_project(x.w, p1.w).data, tangent_project(x.h, p1.h).data};
    TangentPair p2{tangent_project(x.w, probe_w).data, tangent_project(x.h, probe_h).data};
    p2 *= 1.0 / p2.norm();
    const TangentPair hp1 = hess(p1), hp2 = hess(p2);
    const double asym = std::abs(p1.dot(hp2) - p2.dot(hp1));
    if (!(asym <= 1e-9 * (hp1.norm() + hp2.norm()) + 1e-15))
      throw InternalConsistencyError("rtr: Hessian operator is not symmetric (defect " +
                                     std::to_string(asym) + ")");

    const TcgResult sub = truncated_cg(model.riem, hess, radius, max_inner, config.tr.kappa);
    const double model_decrease =
        -(model.riem.dot(sub.eta) + 0.5 * sub.eta.dot(sub.heta));
    const RayEvaluator ray(problem, x, sub.eta);
    const double actual = -ray.delta(1.0);
    const double reg = 1e3 * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, std::abs(model.value));
    const double rho = (actual + reg) / (model_decrease + reg);
    ++it;

    if (!(rho >= config.tr.eta1) || !(actual >= 0.0)) {
      radius *= config.tr.shrink;
    } else {
      if (rho > config.tr.eta2 && sub.boundary)
        radius = std::min(config.tr.grow * radius, radius_max);
      x = retract_pair(x, sub.eta, 1.0);
      model = local_model(problem, x);
      ++trace.accepted_steps;
    }
    rec.record(it, x, model, false);
    if (radius < 1e-300) {
      trace.status = SolverStatus::kStepFailure;
      trace.message = "trust-region radius collapsed";
      break;
    }
  }
  trace.iterations = it;
  rec.record(it, x, model, true);
  trace.final_state = std::move(x);
  return trace;
}

SolverTrace run_solver(const std::string& name, const UfmProblem& problem,
                       const UfmState& init, const SolverConfig& config) {
  if (name == "rgd") return rgd(problem, init, config);
  if (name == "rcg") return rcg(problem, init, config);
  if (name == "rtr") return rtr(problem, init, config);
  throw PreconditionError("unknown solver '" + name + "' (expected rgd, rcg or rtr)");
}

// ------------------------------------------------------ regularized baseline --

void RegularizedConfig::validate() const {
  if (!(lambda_w > 0.0) || !(lambda_h > 0.0))
    throw PreconditionError("regularized: lambda_w and lambda_h must be > 0");
  if (!(step > 0.0)) throw PreconditionError("regularized: step must be > 0");
}

double regularized_value(const UfmProblem& problem, const RegularizedConfig& reg,
                         const Matrix& w, const Matrix& h, Matrix* grad_w, Matrix* grad_h) {
  if (!problem.spec().has_classifier())
    throw UnsupportedError("regularized baseline needs a classifier loss");
  if (w.rows() != problem.dim() || w.cols() != problem.num_classes() ||
      h.rows() != problem.dim() || h.cols() != problem.num_samples())
    throw DimensionError("regularized: W/H shape does not match the problem");
  const double tau = problem.tau();
  const Matrix m = tau * at_b(w, h);
  const ValueGrad vg = head_value_grad(problem.spec(), m, problem.layout());
  if (grad_w != nullptr) *grad_w = tau * a_bt(h, vg.grad) + reg.lambda_w * w;
  if (grad_h != nullptr) *grad_h = tau * a_b(w, vg.grad) + reg.lambda_h * h;
  return vg.value + 0.5 * reg.lambda_w * w.squaredNorm() + 0.5 * reg.lambda_h * h.squaredNorm();
}

RegularizedTrace egd_regularized(const UfmProblem& problem, const Matrix& w0,
                                 const Matrix& h0, const RegularizedConfig& reg,
                                 const SolverConfig& config) {
  reg.validate();
  config.validate();
  RegularizedTrace trace;
  trace.w = w0;
  trace.h = h0;
  const auto start = Clock::now();
  Matrix gw, gh;
  double f = regularized_value(problem, reg, trace.w, trace.h, &gw, &gh);
  const double f0 = f;

  auto record = [&](int iter, bool force) {
    if (!force && iter % config.record_every != 0) return;
    if (!trace.records.empty() && trace.records.back().iter == iter) return;
    TraceRecord r;
    r.iter = iter;
    r.f = f;
    r.grad_norm = gw.norm() + gh.norm();
    if (config.record_metrics) {
      const NcMetrics nc = nc_metrics(trace.w, trace.h, problem.layout());
      r.nc1 = nc.nc1;
      r.nc2 = nc.nc2;
      r.nc3 = nc.nc3;
      r.accuracy =
          train_accuracy(problem.tau() * at_b(trace.w, trace.h), problem.layout());
    } else {
      r.nc1 = r.nc2 = r.nc3 = r.accuracy = kNaN;
    }
    r.elapsed_ms = ms_since(start);
    trace.records.push_back(r);
  };
  record(0, true);

  int it = 0;
  for (;;) {
    if (gw.norm() + gh.norm() <= config.grad_tol) {
      trace.converged = true;
      trace.status = SolverStatus::kConverged;
      break;
    }
    if (it >= config.max_iters) break;
    trace.w -= reg.step * gw;
    trace.h -= reg.step * gh;
    f = regularized_value(problem, reg, trace.w, trace.h, &gw, &gh);
    ++it;
    if (!std::isfinite(f) || f > 10.0 * f0) {
      trace.iterations = it;
      trace.status = SolverStatus::kDiverged;
      record(it, true);
      char buf[96];
      std::snprintf(buf, sizeof buf, "regularized GD diverged at iteration %d (f = %.6g)", it,
                    f);
      throw DivergenceError(buf, std::move(trace));
    }
    record(it, false);
  }
  trace.iterations = it;
  record(it, true);
  return trace;
}

double tune_regularized_step(const UfmProblem& problem, const Matrix& w0, const Matrix& h0,
                             double lambda_w, double lambda_h, int probe_iters) {
  RegularizedConfig reg{lambda_w, lambda_h, 1.0};
  reg.validate();
  auto stable = [&](double step) {
    Matrix w = w0, h = h0, gw, gh;
    double f = regularized_value(problem, reg, w, h, &gw, &gh);
    for (int i = 0; i < probe_iters; ++i) {
      w -= step * gw;
      h -= step * gh;
      const double next = regularized_value(problem, reg, w, h, &gw, &gh);
      if (!std::isfinite(next) || next > f + 1e-12 * std::abs(f)) return false;
      f = next;
    }
    return true;
  };
  double step = 1.0;
  if (stable(step)) {
    while (step < 0x1p40 && stable(2.0 * step)) step *= 2.0;
    return step;
  }
  while (step > 0x1p-40 && !stable(step)) step *= 0.5;
  return step;
}

}  // namespace obnc
