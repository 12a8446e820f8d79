#include "obnc/experiment.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <thread>

#include "obnc/errors.hpp"
#include "obnc/rng.hpp"
#include "obnc/saddle.hpp"

namespace obnc {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Task {
  std::size_t grid = 0;  // index into the (K, tau, param) grid
  int ik = 0, it = 0, ip = 0;
  std::string solver;
  int trial = 0;
};

// Shortest round-trip decimal; "nan"/"inf" spelled without sign noise.
std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  (void)ec;
  return std::string(buf, end);
}

std::string ms(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  return buf;
}

const std::vector<double>& effective_params(const ExperimentConfig& c) {
  static const std::vector<double> none{0.0};
  return (c.loss == LossKind::kFocal || c.loss == LossKind::kLabelSmoothing) ? c.params : none;
}

unsigned worker_count(std::size_t tasks) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("OBNC_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = static_cast<unsigned>(cap);
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(tasks, 1)));
}

int first_full_accuracy(const std::vector<TraceRecord>& records) {
  for (const TraceRecord& r : records)
    if (r.accuracy >= 1.0) return r.iter;
  return -1;
}

TrialResult run_trial(const ExperimentConfig& cfg, const Task& task) {
  TrialResult out;
  out.solver = task.solver;
  out.k = cfg.ks[task.ik];
  out.tau = cfg.taus[task.it];
  out.param = effective_params(cfg)[task.ip];
  out.trial = task.trial;
  const std::uint64_t seed =
      derive_seed(cfg.seed0, {static_cast<std::uint64_t>(task.ik),
                              static_cast<std::uint64_t>(task.it),
                              static_cast<std::uint64_t>(task.ip),
                              static_cast<std::uint64_t>(task.trial)});
  try {
    const UfmProblem problem(cfg.d, out.k, cfg.n, LossSpec{cfg.loss, out.param, out.tau});
    SolverConfig sc = cfg.solver;
    sc.seed = seed;

    std::optional<UfmState> init;
    if (cfg.kind == ExperimentKind::kSaddleDemo) {
      const UfmState saddle = rank_one_saddle(problem, derive_seed(seed, {3}));
      const SaddleCertificate cert = certify_strict_saddle(problem, saddle, 1e-8);
      out.cert_case = saddle_case_name(cert.case_tag);
      out.hess_value = cert.hess_value;
      out.proof_bound = cert.proof_bound;
      out.tau_bound = cert.tau_bound;
      out.ht_a_sq = cert.ht_a_sq;
      out.hypothesis_holds = cert.hypothesis_holds;
      CounterRng rng(derive_seed(seed, {4}));
      TangentPair noise{
          tangent_project(saddle.w, rng.gaussian_matrix(cfg.d, out.k)).data,
          tangent_project(saddle.h, rng.gaussian_matrix(cfg.d, problem.num_samples())).data};
      noise *= cfg.saddle_noise / noise.norm();
      init.emplace(UfmState{retract(saddle.w, noise.w, 1.0), retract(saddle.h, noise.h, 1.0)});
    } else {
      init.emplace(UfmState{random_oblique(cfg.d, out.k, derive_seed(seed, {1})),
                            random_oblique(cfg.d, problem.num_samples(), derive_seed(seed, {2}))});
    }

    if (task.solver == "egd") {
      const Matrix& w0 = init->w.matrix();
      const Matrix& h0 = init->h.matrix();
      RegularizedConfig reg{cfg.lambda, cfg.lambda,
                            tune_regularized_step(problem, w0, h0, cfg.lambda, cfg.lambda)};
      RegularizedTrace t;
      try {
        t = egd_regularized(problem, w0, h0, reg, sc);
        out.ok = true;
      } catch (const DivergenceError& e) {
        t = e.partial();
      }
      out.records = std::move(t.records);
      out.status = status_name(t.status);
      out.iterations = t.iterations;
      out.final_f = out.records.back().f;
      out.final_nc = nc_metrics(t.w, t.h, problem.layout());
      out.success = out.ok &&
                    train_accuracy(problem.tau() * at_b(t.w, t.h), problem.layout()) >= 1.0;
    } else {
      SolverTrace t = run_solver(task.solver, problem, *init, sc);
      out.ok = t.status != SolverStatus::kStepFailure;
      out.status = status_name(t.status);
      out.iterations = t.iterations;
      out.records = std::move(t.records);
      out.final_f = out.records.back().f;
      out.final_nc = nc_metrics(problem, t.final_state);
      out.success =
          out.ok && std::abs(out.final_f - reference_value(problem)) <= cfg.success_tol;
    }
    out.iters_to_full_accuracy = first_full_accuracy(out.records);
  } catch (const std::exception& e) {
    out.ok = false;
    out.success = false;
    out.status = std::string("error: ") + e.what();
  }
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path + "'");
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "experiment.name",          "experiment.output",        "experiment.trials",
      "experiment.seed0",         "experiment.success_tol",   "problem.d",
      "problem.n",                "problem.K",                "problem.tau",
      "problem.loss",             "problem.param",            "solver.name",
      "solver.max_iters",         "solver.grad_tol",          "solver.cg_restart",
      "solver.record_every",      "solver.record_metrics",    "line_search.tol",
      "line_search.bracket_max",  "line_search.max_expansions", "trust_region.radius0",
      "trust_region.radius_max",  "trust_region.eta1",        "trust_region.eta2",
      "trust_region.shrink",      "trust_region.grow",        "trust_region.max_inner",
      "trust_region.kappa",       "baseline.lambda",          "saddle.noise"};
  return keys;
}

}  // namespace

std::string experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kLowerBoundSweep: return "lower_bound_sweep";
    case ExperimentKind::kTauSweep: return "tau_sweep";
    case ExperimentKind::kSolverRace: return "solver_race";
    case ExperimentKind::kOtherLosses: return "other_losses";
    case ExperimentKind::kSaddleDemo: return "saddle_demo";
  }
  return "unknown";
}

ExperimentConfig ExperimentConfig::from_config(const Config& cfg) {
  for (const auto& [key, entry] : cfg.entries())
    if (!known_keys().count(key)) cfg.fail(key, "unknown key");

  ExperimentConfig c;
  const std::string name = cfg.get_string("experiment.name", "");
  bool found = false;
  for (ExperimentKind k : {ExperimentKind::kLowerBoundSweep, ExperimentKind::kTauSweep,
                           ExperimentKind::kSolverRace, ExperimentKind::kOtherLosses,
                           ExperimentKind::kSaddleDemo})
    if (experiment_name(k) == name) {
      c.kind = k;
      found = true;
    }
  if (!found)
    cfg.fail("experiment.name", "expected lower_bound_sweep, tau_sweep, solver_race, "
                                "other_losses or saddle_demo, got '" + name + "'");

  c.output = cfg.get_string("experiment.output", ".");
  c.trials = cfg.get_int("experiment.trials", 1);
  if (c.trials < 1) cfg.fail("experiment.trials", "must be >= 1");
  c.seed0 = cfg.get_u64("experiment.seed0", 0);
  c.success_tol = cfg.get_double("experiment.success_tol", c.success_tol);

  c.d = cfg.get_int("problem.d", c.d);
  c.n = cfg.get_int("problem.n", c.n);
  if (c.d < 1) cfg.fail("problem.d", "must be >= 1");
  if (c.n < 1) cfg.fail("problem.n", "must be >= 1");
  c.ks = cfg.get_int_list("problem.K", c.ks);
  for (int k : c.ks)
    if (k < 2) cfg.fail("problem.K", "every K must be >= 2");
  c.taus = cfg.get_double_list("problem.tau", c.taus);
  for (double t : c.taus)
    if (!(t > 0.0)) cfg.fail("problem.tau", "every tau must be > 0");
  if (cfg.has("problem.loss")) {
    try {
      c.loss = parse_loss_kind(cfg.get_string("problem.loss", "ce"));
    } catch (const PreconditionError& e) {
      cfg.fail("problem.loss", e.what());
    }
  }
  c.params = cfg.get_double_list("problem.param", c.params);
  for (double p : c.params) {
    try {
      LossSpec{c.loss, p, 1.0}.validate();
    } catch (const PreconditionError& e) {
      cfg.fail("problem.param", e.what());
    }
  }
  if ((c.kind == ExperimentKind::kLowerBoundSweep || c.kind == ExperimentKind::kSaddleDemo) &&
      c.loss != LossKind::kCrossEntropy)
    cfg.fail("problem.loss", experiment_name(c.kind) + " is defined for the ce loss only");
  if (c.loss == LossKind::kSupervisedContrastive && c.n < 2)
    cfg.fail("problem.n", "the sc loss needs n >= 2");

  if (c.kind == ExperimentKind::kSaddleDemo) c.solvers = {"rtr"};
  c.solvers = cfg.get_string_list("solver.name", c.solvers);
  for (const std::string& s : c.solvers) {
    const bool race = c.kind == ExperimentKind::kSolverRace;
    if (!(s == "rgd" || s == "rcg" || s == "rtr" || (race && s == "egd")))
      cfg.fail("solver.name", "unknown solver '" + s + "'");
    if (s == "rtr" && !LossSpec{c.loss, 0.0, 1.0}.has_hessian())
      cfg.fail("solver.name", "rtr needs the ce or ls loss");
  }

  SolverConfig& s = c.solver;
  s.max_iters = cfg.get_int("solver.max_iters", s.max_iters);
  s.grad_tol = cfg.get_double("solver.grad_tol", s.grad_tol);
  s.cg_restart = cfg.get_int("solver.cg_restart", s.cg_restart);
  s.record_every = cfg.get_int("solver.record_every", s.record_every);
  s.record_metrics = cfg.get_bool("solver.record_metrics", s.record_metrics);
  s.line_search.tol = cfg.get_double("line_search.tol", s.line_search.tol);
  s.line_search.bracket_max = cfg.get_double("line_search.bracket_max", s.line_search.bracket_max);
  s.line_search.max_expansions =
      cfg.get_int("line_search.max_expansions", s.line_search.max_expansions);
  s.tr.radius0 = cfg.get_double("trust_region.radius0", s.tr.radius0);
  s.tr.radius_max = cfg.get_double("trust_region.radius_max", s.tr.radius_max);
  s.tr.eta1 = cfg.get_double("trust_region.eta1", s.tr.eta1);
  s.tr.eta2 = cfg.get_double("trust_region.eta2", s.tr.eta2);
  s.tr.shrink = cfg.get_double("trust_region.shrink", s.tr.shrink);
  s.tr.grow = cfg.get_double("trust_region.grow", s.tr.grow);
  s.tr.max_inner = cfg.get_int("trust_region.max_inner", s.tr.max_inner);
  s.tr.kappa = cfg.get_double("trust_region.kappa", s.tr.kappa);
  try {
    s.validate();
  } catch (const PreconditionError& e) {
    throw ParseError(std::string("solver settings: ") + e.what(), 0, 0, 0);
  }
  c.lambda = cfg.get_double("baseline.lambda", c.lambda);
  if (!(c.lambda > 0.0)) cfg.fail("baseline.lambda", "must be > 0");
  c.saddle_noise = cfg.get_double("saddle.noise", c.saddle_noise);
  if (!(c.saddle_noise >= 0.0)) cfg.fail("saddle.noise", "must be >= 0");
  return c;
}

double reference_value(const UfmProblem& problem) {
  const LossSpec& spec = problem.spec();
  switch (spec.kind) {
    case LossKind::kCrossEntropy: return global_lower_bound(problem.num_classes(), spec.tau);
    case LossKind::kLabelSmoothing:
      return ls_nc_value(problem.num_classes(), spec.tau, spec.param);
    case LossKind::kFocal:
    case LossKind::kSupervisedContrastive: break;
  }
  return f_value(problem, nc_solution(problem, 0));
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  for (int k : config.ks)
    if (k > config.d)
      throw InfeasibleDimensionError("K = " + std::to_string(k) + " exceeds d = " +
                                     std::to_string(config.d) +
                                     "; the simplex ETF reference needs d >= K");

  const std::vector<double>& params = effective_params(config);
  std::vector<Task> tasks;
  std::size_t grid = 0;
  for (int ik = 0; ik < static_cast<int>(config.ks.size()); ++ik)
    for (int it = 0; it < static_cast<int>(config.taus.size()); ++it)
      for (int ip = 0; ip < static_cast<int>(params.size()); ++ip, ++grid)
        for (const std::string& solver : config.solvers)
          for (int trial = 0; trial < config.trials; ++trial)
            tasks.push_back(Task{grid, ik, it, ip, solver, trial});

  ExperimentResult result;
  result.trials.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++)
      result.trials[i] = run_trial(config, tasks[i]);
  };
  const unsigned workers = worker_count(tasks.size());
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < workers; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  // Trials of one (grid point, solver) are contiguous.
  for (std::size_t b = 0; b < tasks.size(); b += config.trials) {
    const TrialResult& first = result.trials[b];
    SummaryRow row;
    row.solver = first.solver;
    row.k = first.k;
    row.tau = first.tau;
    row.param = first.param;
    row.trials = config.trials;
    if (first.solver == "egd") {
      row.theoretical_ref = kNaN;
    } else {
      try {
        row.theoretical_ref = reference_value(
            UfmProblem(config.d, row.k, config.n, LossSpec{config.loss, row.param, row.tau}));
      } catch (const std::exception&) {
        row.theoretical_ref = kNaN;
      }
    }
    int ok = 0, acc_count = 0;
    double f = 0, nc1 = 0, nc2 = 0, nc3 = 0, iters = 0, acc_iters = 0;
    for (int t = 0; t < config.trials; ++t) {
      const TrialResult& r = result.trials[b + t];
      if (r.success) ++row.success_count;
      if (!r.ok) continue;
      ++ok;
      f += r.final_f;
      nc1 += r.final_nc.nc1;
      nc2 += r.final_nc.nc2;
      nc3 += r.final_nc.nc3;
      iters += r.iterations;
      if (r.iters_to_full_accuracy >= 0) {
        ++acc_count;
        acc_iters += r.iters_to_full_accuracy;
      }
    }
    row.failure_count = config.trials - row.success_count;
    const double inv = ok > 0 ? 1.0 / ok : kNaN;
    row.mean_final_f = f * inv;
    row.abs_gap = std::abs(row.mean_final_f - row.theoretical_ref);
    row.mean_nc1 = nc1 * inv;
    row.mean_nc2 = nc2 * inv;
    row.mean_nc3 = nc3 * inv;
    row.mean_iterations = iters * inv;
    row.mean_iters_to_full_accuracy = acc_count > 0 ? acc_iters / acc_count : kNaN;
    result.summary.push_back(row);
  }

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.output, ec);
  if (ec) throw Error("cannot create output directory '" + config.output + "': " + ec.message());
  const std::string base = (fs::path(config.output) / experiment_name(config.kind)).string();
  write_file(base + ".csv", trace_csv(config, result));
  write_file(base + "_summary.csv", summary_csv(config, result));
  result.files = {base + ".csv", base + "_summary.csv"};
  if (config.kind == ExperimentKind::kSaddleDemo) {
    write_file(base + "_certificates.csv", certificates_csv(config, result));
    result.files.push_back(base + "_certificates.csv");
  }
  return result;
}

std::string trace_csv(const ExperimentConfig& config, const ExperimentResult& result) {
  const std::string exp = experiment_name(config.kind);
  const std::string loss = loss_name(config.loss);
  std::string out =
      "experiment,solver,loss,K,tau,param,trial,iter,f,grad_norm,nc1,nc2,nc3,accuracy,"
      "elapsed_ms\n";
  for (const TrialResult& t : result.trials) {
    const std::string prefix = exp + "," + t.solver + "," + loss + "," + std::to_string(t.k) +
                               "," + num(t.tau) + "," + num(t.param) + "," +
                               std::to_string(t.trial) + ",";
    for (const TraceRecord& r : t.records)
      out += prefix + std::to_string(r.iter) + "," + num(r.f) + "," + num(r.grad_norm) + "," +
             num(r.nc1) + "," + num(r.nc2) + "," + num(r.nc3) + "," + num(r.accuracy) + "," +
             ms(r.elapsed_ms) + "\n";
  }
  return out;
}

std::string summary_csv(const ExperimentConfig& config, const ExperimentResult& result) {
  const std::string exp = experiment_name(config.kind);
  const std::string loss = loss_name(config.loss);
  std::string out =
      "experiment,solver,loss,K,tau,param,trials,theoretical_ref,mean_final_f,abs_gap,"
      "mean_nc1,mean_nc2,mean_nc3,mean_iterations,mean_iters_to_full_accuracy,"
      "success_count,failure_count\n";
  for (const SummaryRow& r : result.summary)
    out += exp + "," + r.solver + "," + loss + "," + std::to_string(r.k) + "," + num(r.tau) +
           "," + num(r.param) + "," + std::to_string(r.trials) + "," + num(r.theoretical_ref) +
           "," + num(r.mean_final_f) + "," + num(r.abs_gap) + "," + num(r.mean_nc1) + "," +
           num(r.mean_nc2) + "," + num(r.mean_nc3) + "," + num(r.mean_iterations) + "," +
           num(r.mean_iters_to_full_accuracy) + "," + std::to_string(r.success_count) + "," +
           std::to_string(r.failure_count) + "\n";
  return out;
}

std::string certificates_csv(const ExperimentConfig& config, const ExperimentResult& result) {
  std::string out =
      "experiment,K,d,n,tau,trial,case,hess_value,proof_bound,tau_bound,ht_a_sq,"
      "hypothesis_holds,escape_solver,escape_final_f,escape_gap,escape_status\n";
  for (const TrialResult& t : result.trials) {
    const double bound = global_lower_bound(t.k, t.tau);
    out += experiment_name(config.kind) + "," + std::to_string(t.k) + "," +
           std::to_string(config.d) + "," + std::to_string(config.n) + "," + num(t.tau) + "," +
           std::to_string(t.trial) + "," + (t.cert_case.empty() ? "none" : t.cert_case) + "," +
           num(t.hess_value) + "," + num(t.proof_bound) + "," + num(t.tau_bound) + "," +
           num(t.ht_a_sq) + "," + (t.hypothesis_holds ? "1" : "0") + "," + t.solver + "," +
           num(t.ok ? t.final_f : kNaN) + "," + num(t.ok ? std::abs(t.final_f - bound) : kNaN) +
           "," + t.status + "\n";
  }
  return out;
}

}  // namespace obnc
