// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   obnc_acceptance            run everything
//   obnc_acceptance 3 7        run a subset (criterion 3 implies 1)

#include <algorithm>
#include <atomic>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "obnc/experiment.hpp"
#include "obnc/rng.hpp"
#include "obnc/saddle.hpp"
#include "obnc/solvers.hpp"

namespace {

using namespace obnc;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// Runs body(i) for i in [0, count) on up to hardware_concurrency threads.
void parallel_for(int count, const std::function<void(int)>& body) {
  const int workers =
      std::max(1, std::min<int>(count, static_cast<int>(std::thread::hardware_concurrency())));
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) body(i);
    });
  for (std::thread& t : pool) t.join();
}

UfmState random_state(const UfmProblem& p, std::uint64_t seed) {
  return UfmState{random_oblique(p.dim(), p.num_classes(), derive_seed(seed, {1})),
                  random_oblique(p.dim(), p.num_samples(), derive_seed(seed, {2}))};
}

TangentPair random_tangent(const UfmState& s, std::uint64_t seed) {
  CounterRng rng(seed);
  TangentPair v{tangent_project(s.w, rng.gaussian_matrix(s.w.rows(), s.w.cols())).data,
                tangent_project(s.h, rng.gaussian_matrix(s.h.rows(), s.h.cols())).data};
  return (1.0 / v.norm()) * v;
}

UfmState retract_pair(const UfmState& s, const TangentPair& v, double t) {
  return UfmState{retract(s.w, v.w, t), retract(s.h, v.h, t)};
}

int first_iter_within(const std::vector<TraceRecord>& recs, double ref, double tol) {
  for (const TraceRecord& r : recs)
    if (std::abs(r.f - ref) <= tol) return r.iter;
  return -1;
}

int first_full_accuracy(const std::vector<TraceRecord>& recs) {
  for (const TraceRecord& r : recs)
    if (r.accuracy >= 1.0) return r.iter;
  return -1;
}

// ---------------------------------------------------------------- 1 and 3 --

struct SweepRun {
  int k = 0;
  std::uint64_t seed = 0;
  double gap = 0.0;
  bool converged = false;
  NcMetrics nc;
  bool certificate = false;
};

std::vector<SweepRun> g_sweep;
double g_sweep_seconds = 0.0;

void run_class_sweep() {
  if (!g_sweep.empty()) return;
  const auto start = Clock::now();
  // Serial on purpose: the runtime bound is for a single laptop core.
  for (int k : {5, 10, 20, 50})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const UfmProblem p(100, k, 5, LossSpec::cross_entropy(1.0));
      SolverConfig c;
      c.max_iters = 5000;
      c.grad_tol = 1e-8;
      c.record_metrics = false;
      const SolverTrace t = rgd(p, random_state(p, derive_seed(100 + k, {seed})), c);
      SweepRun r;
      r.k = k;
      r.seed = seed;
      r.gap = std::abs(t.records.back().f - global_lower_bound(k, 1.0));
      r.converged = t.converged;
      r.nc = nc_metrics(p, t.final_state);
      if (t.converged) r.certificate = global_certificate(p, t.final_state, 1e-8);
      g_sweep.push_back(r);
    }
  g_sweep_seconds = std::chrono::duration<double>(Clock::now() - start).count();
}

Verdict criterion1() {
  run_class_sweep();
  double worst = 0.0;
  bool ok = true;
  for (const SweepRun& r : g_sweep) {
    worst = std::max(worst, r.gap);
    ok = ok && r.gap <= 1e-3;
  }
  ok = ok && g_sweep_seconds < 300.0;
  return {ok, fmt("20 rgd runs, K in {5,10,20,50}; worst |f - bound| = %.3g; %.1f s total",
                  worst, g_sweep_seconds)};
}

Verdict criterion3() {
  run_class_sweep();
  int converged = 0;
  bool ok = true;
  double worst = 0.0;
  for (const SweepRun& r : g_sweep) {
    if (!r.converged) continue;
    ++converged;
    const double m = std::max({r.nc.nc1, r.nc.nc2, r.nc.nc3});
    worst = std::max(worst, m);
    ok = ok && m <= 1e-2 && r.certificate;
  }
  ok = ok && converged > 0;
  return {ok, fmt("%d/%zu runs converged; worst NC metric %.3g; certificate %s", converged,
                  g_sweep.size(), worst, ok ? "holds on all" : "fails somewhere")};
}

// --------------------------------------------------------------------- 2 --

Verdict criterion2() {
  const std::vector<double> taus{0.1, 0.5, 1, 2, 5, 10};
  const int seeds = 5;
  std::vector<double> final_f(taus.size() * seeds), gap(taus.size() * seeds);
  parallel_for(static_cast<int>(final_f.size()), [&](int i) {
    const double tau = taus[i / seeds];
    const UfmProblem p(100, 10, 5, LossSpec::cross_entropy(tau));
    SolverConfig c;
    c.max_iters = 5000;
    c.grad_tol = 1e-8;
    c.record_metrics = false;
    const SolverTrace t = rgd(p, random_state(p, derive_seed(200, {std::uint64_t(i)})), c);
    final_f[i] = t.records.back().f;
    gap[i] = std::abs(final_f[i] - global_lower_bound(10, tau));
  });
  bool ok = *std::max_element(gap.begin(), gap.end()) <= 1e-3;
  std::string minima;
  double prev = INFINITY;
  for (std::size_t j = 0; j < taus.size(); ++j) {
    const double m = *std::min_element(final_f.begin() + j * seeds, final_f.begin() + (j + 1) * seeds);
    ok = ok && m < prev;
    prev = m;
    minima += fmt("%s%.6f", j ? " > " : "", m);
  }
  return {ok, fmt("worst gap %.3g over %zu runs; minima %s",
                  *std::max_element(gap.begin(), gap.end()), gap.size(), minima.c_str())};
}

// --------------------------------------------------------------------- 4 --

Verdict criterion4() {
  const std::vector<LossSpec> specs{LossSpec::cross_entropy(1.0), LossSpec::focal(3.0, 1.0),
                                    LossSpec::label_smoothing(0.1, 1.0),
                                    LossSpec::supervised_contrastive(1.0)};
  double grad_err = 0.0, hess_err = 0.0, op_err = 0.0;
  int hess_instances = 0;
  for (const LossSpec& base : specs) {
    for (std::uint64_t inst = 0; inst < 20; ++inst) {
      CounterRng rng(derive_seed(400 + static_cast<int>(base.kind), {inst}));
      const int k = 2 + static_cast<int>(rng.next_u64() % 4);
      const int n = 2 + static_cast<int>(rng.next_u64() % 2);
      const int d = 3 + static_cast<int>(rng.next_u64() % 6);
      LossSpec spec = base;
      spec.tau = 0.5 + 2.5 * rng.uniform();
      const UfmProblem p(d, k, n, spec);
      const UfmState s = random_state(p, rng.next_u64());

      // Direction with a guaranteed component along the gradient, so the
      // relative error is taken against a derivative bounded away from zero.
      const TangentPair g = riem_grad(p, s);
      TangentPair v = (1.0 / g.norm()) * g + random_tangent(s, rng.next_u64());
      v = (1.0 / v.norm()) * v;
      const double h = 1e-5;
      const double fd = (f_value(p, retract_pair(s, v, h)) - f_value(p, retract_pair(s, v, -h))) /
                        (2 * h);
      const double exact = g.dot(v);
      grad_err = std::max(grad_err, std::abs(exact - fd) / std::abs(exact));

      if (!spec.has_hessian()) continue;
      ++hess_instances;
      const TangentPair u = random_tangent(s, rng.next_u64());
      // Richardson-extrapolated second difference: the h^2 truncation term
      // cancels, leaving O(h^4) plus rounding well below the tolerance.
      auto d2 = [&](double hh) {
        return (f_value(p, retract_pair(s, u, hh)) - 2 * f_value(p, s) +
                f_value(p, retract_pair(s, u, -hh))) /
               (hh * hh);
      };
      const double fd2 = (4 * d2(1e-3) - d2(2e-3)) / 3;
      const double bil = riem_hess_bilinear(p, s, u);
      hess_err = std::max(hess_err, std::abs(bil - fd2) / std::abs(bil));
      op_err = std::max(op_err, std::abs(u.dot(riem_hess_apply(p, s, u)) - bil));
    }
  }
  const bool ok = grad_err <= 1e-6 && hess_err <= 1e-4 && op_err <= 1e-10;
  return {ok, fmt("gradient rel err %.2g (80 instances, 4 losses); Hessian rel err %.2g and "
                  "operator/bilinear gap %.2g (%d instances, ce and ls)",
                  grad_err, hess_err, op_err, hess_instances)};
}

// --------------------------------------------------------------------- 5 --

Verdict criterion5() {
  bool ok = true;
  std::string vals;
  for (int k = 2; k <= 8; ++k) {
    const double tau = 1.0;
    const UfmProblem p(k + 2, k, 3, LossSpec::cross_entropy(tau));
    const UfmState s = rank_one_saddle(p, derive_seed(500, {std::uint64_t(k)}));
    const bool critical = riem_grad(p, s).norm() <= 1e-10;
    const bool global = global_certificate(p, s, 1e-8);
    const SaddleCertificate c = escape_direction_case1(p, s);
    const double bound = -2.0 * tau * (k - k % 2) / k;
    const bool ht_zero = c.ht_a_sq <= 1e-20;
    ok = ok && critical && !global && c.hess_value < -1e-8 && ht_zero &&
         c.hess_value <= bound + 1e-10;
    vals += fmt(" K=%d:%.4f<=%.4f", k, c.hess_value, bound);
  }
  return {ok, "hess_value vs bound" + vals};
}

// --------------------------------------------------------------------- 6 --

Verdict criterion6() {
  const UfmProblem p(12, 5, 3, LossSpec::cross_entropy(1.0));
  const double bound = global_lower_bound(5, 1.0);
  std::vector<double> gaps(10);
  parallel_for(10, [&](int i) {
    const std::uint64_t seed = derive_seed(600, {std::uint64_t(i)});
    const UfmState saddle = rank_one_saddle(p, seed);
    const UfmState init =
        retract_pair(saddle, 1e-6 * random_tangent(saddle, derive_seed(seed, {9})), 1.0);
    SolverConfig c;
    c.max_iters = 500;
    c.grad_tol = 1e-10;
    c.record_metrics = false;
    c.seed = seed;
    const SolverTrace t = rtr(p, init, c);
    gaps[i] = std::abs(t.records.back().f - bound);
  });
  const int hits = static_cast<int>(std::count_if(gaps.begin(), gaps.end(),
                                                  [](double g) { return g <= 1e-6; }));
  return {hits == 10, fmt("%d/10 seeds escape to |f - bound| <= 1e-6 (worst %.3g)", hits,
                          *std::max_element(gaps.begin(), gaps.end()))};
}

// --------------------------------------------------------------------- 7 --

Verdict criterion7() {
  const UfmProblem p(64, 20, 10, LossSpec::cross_entropy(1.0));
  const double lambda = 1e-4;
  struct Row {
    int rgd_acc = -1, egd_acc = -1;
    double rgd_nc1 = 0.0, egd_nc1 = 0.0, step = 0.0;
  };
  std::vector<Row> rows(10);
  parallel_for(10, [&](int i) {
    const UfmState init = random_state(p, derive_seed(700, {std::uint64_t(i)}));
    SolverConfig c;
    c.max_iters = 1000;
    c.grad_tol = 1e-8;
    const SolverTrace r = rgd(p, init, c);
    rows[i].rgd_acc = first_full_accuracy(r.records);
    rows[i].rgd_nc1 = r.records.back().nc1;

    const Matrix& w0 = init.w.matrix();
    const Matrix& h0 = init.h.matrix();
    rows[i].step = tune_regularized_step(p, w0, h0, lambda, lambda);
    RegularizedTrace e;
    try {
      e = egd_regularized(p, w0, h0, RegularizedConfig{lambda, lambda, rows[i].step}, c);
    } catch (const DivergenceError& err) {
      e = err.partial();
    }
    rows[i].egd_acc = first_full_accuracy(e.records);
    rows[i].egd_nc1 = e.records.back().nc1;
  });
  int faster = 0, lower_nc1 = 0;
  std::string acc;
  for (const Row& r : rows) {
    const bool reached = r.rgd_acc >= 0;
    if (reached && (r.egd_acc < 0 || r.rgd_acc < r.egd_acc)) ++faster;
    if (r.rgd_nc1 < r.egd_nc1) ++lower_nc1;
    acc += fmt(" %d/%d", r.rgd_acc, r.egd_acc);
  }
  const bool ok = faster >= 8 && lower_nc1 >= 8;
  return {ok, fmt("rgd strictly faster to 100%% accuracy on %d/10 seeds, lower final NC1 on "
                  "%d/10; iterations rgd/egd:%s; egd step %g",
                  faster, lower_nc1, acc.c_str(), rows[0].step)};
}

// --------------------------------------------------------------------- 8 --

Verdict criterion8() {
  const UfmProblem p(100, 10, 5, LossSpec::cross_entropy(1.0));
  const double bound = global_lower_bound(10, 1.0);
  struct Row {
    double rgd_f = 0.0, rcg_f = 0.0;
    int rgd_1e3 = -1, rtr_1e6 = -1;
  };
  std::vector<Row> rows(10);
  parallel_for(10, [&](int i) {
    const std::uint64_t seed = derive_seed(800, {std::uint64_t(i)});
    const UfmState init = random_state(p, seed);
    SolverConfig c;
    c.max_iters = 3000;
    c.grad_tol = 1e-8;
    c.record_metrics = false;
    c.seed = seed;
    const SolverTrace a = rgd(p, init, c);
    const SolverTrace b = rcg(p, init, c);
    const SolverTrace r = rtr(p, init, c);
    rows[i] = Row{a.records.back().f, b.records.back().f, first_iter_within(a.records, bound, 1e-3),
                  first_iter_within(r.records, bound, 1e-6)};
  });
  int parity = 0, faster = 0;
  double worst = 0.0;
  std::string its;
  for (const Row& r : rows) {
    worst = std::max(worst, std::abs(r.rcg_f - r.rgd_f));
    if (std::abs(r.rcg_f - r.rgd_f) <= 1e-4) ++parity;
    if (r.rtr_1e6 >= 0 && (r.rgd_1e3 < 0 || r.rtr_1e6 < r.rgd_1e3)) ++faster;
    its += fmt(" %d/%d", r.rtr_1e6, r.rgd_1e3);
  }
  return {parity == 10 && faster >= 8,
          fmt("rcg within 1e-4 of rgd on %d/10 (worst %.2g); rtr@1e-6 before rgd@1e-3 on "
              "%d/10; iterations rtr/rgd:%s",
              parity, worst, faster, its.c_str())};
}

// --------------------------------------------------------------------- 9 --

Verdict criterion9() {
  struct Case {
    LossSpec spec;
    int k;
    const char* name;
    int max_iters;
  };
  std::vector<Case> cases;
  for (int k : {3, 5, 10}) {
    cases.push_back({LossSpec::focal(3.0, 1.0), k, "focal", 5000});
    cases.push_back({LossSpec::supervised_contrastive(1.0), k, "sc", 5000});
    cases.push_back({LossSpec::label_smoothing(0.1, 1.0), k, "ls@1", 5000});
    cases.push_back({LossSpec::label_smoothing(0.1, 50.0), k, "ls@50", 2000});
  }
  const int seeds = 3;
  std::vector<double> final_f(cases.size() * seeds);
  parallel_for(static_cast<int>(final_f.size()), [&](int i) {
    const Case& c = cases[i / seeds];
    const UfmProblem p(16, c.k, 3, c.spec);
    SolverConfig sc;
    sc.max_iters = c.max_iters;
    sc.grad_tol = 1e-8;
    sc.record_metrics = false;
    final_f[i] = rgd(p, random_state(p, derive_seed(900, {std::uint64_t(i)})), sc).records.back().f;
  });
  bool ok = true;
  std::string detail;
  for (std::size_t j = 0; j < cases.size(); ++j) {
    const Case& c = cases[j];
    const UfmProblem p(16, c.k, 3, c.spec);
    const double ref = reference_value(p);
    double worst = 0.0;
    bool case_ok = true;
    for (int s = 0; s < seeds; ++s) {
      const double f = final_f[j * seeds + s];
      if (c.spec.tau == 50.0) {
        case_ok = case_ok && f <= std::log(c.k) + 1e-3 && f < ref;
        worst = std::max(worst, f);
      } else {
        case_ok = case_ok && std::abs(f - ref) <= 1e-3;
        worst = std::max(worst, std::abs(f - ref));
      }
    }
    ok = ok && case_ok;
    detail += c.spec.tau == 50.0
                  ? fmt(" %s K=%d max f %.3f (log K %.3f, NC %.3f)%s;", c.name, c.k, worst,
                        std::log(c.k), ref, case_ok ? "" : " FAIL")
                  : fmt(" %s K=%d gap %.2g%s;", c.name, c.k, worst, case_ok ? "" : " FAIL");
  }
  return {ok, detail};
}

// -------------------------------------------------------------------- 10 --

std::string read_without_elapsed(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream out;
  std::string line;
  bool header = true;
  int elapsed_col = -1;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    if (header) {
      for (std::size_t i = 0; i < cols.size(); ++i)
        if (cols[i] == "elapsed_ms") elapsed_col = static_cast<int>(i);
      header = false;
    }
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (static_cast<int>(i) != elapsed_col) out << cols[i] << ',';
    out << '\n';
  }
  return out.str();
}

Verdict criterion10() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "obnc_acceptance_determinism";
  fs::remove_all(root);
  const char* configs[] = {
      "[experiment]\nname = lower_bound_sweep\ntrials = 3\nseed0 = 11\n"
      "[problem]\nd = 16\nn = 3\nK = 3, 5, 8\n[solver]\nname = rgd, rcg, rtr\nmax_iters = 300\n",
      "[experiment]\nname = tau_sweep\ntrials = 2\nseed0 = 12\n"
      "[problem]\nd = 12\nn = 2\nK = 4\ntau = 0.5, 2\nloss = ls\nparam = 0, 0.1\n"
      "[solver]\nmax_iters = 200\n",
      "[experiment]\nname = solver_race\ntrials = 2\nseed0 = 13\n"
      "[problem]\nd = 16\nn = 3\nK = 6\n[solver]\nname = rgd, egd\nmax_iters = 100\n",
      "[experiment]\nname = other_losses\ntrials = 2\nseed0 = 14\n"
      "[problem]\nd = 10\nn = 2\nK = 3\nloss = sc\n[solver]\nname = rgd, rcg\nmax_iters = 200\n",
      "[experiment]\nname = saddle_demo\ntrials = 3\nseed0 = 15\n"
      "[problem]\nd = 12\nn = 3\nK = 5\n[solver]\nmax_iters = 100\n",
  };
  int files = 0, identical = 0;
  for (const char* text : configs) {
    std::vector<std::vector<std::string>> runs;
    for (const char* threads : {"1", "4"}) {
      setenv("OBNC_THREADS", threads, 1);
      Config cfg = Config::parse(text);
      cfg.apply_override("experiment.output=" + (root / threads).string());
      const ExperimentResult r = run_experiment(ExperimentConfig::from_config(cfg));
      std::vector<std::string> contents;
      for (const std::string& f : r.files) contents.push_back(read_without_elapsed(f));
      runs.push_back(contents);
    }
    for (std::size_t i = 0; i < runs[0].size(); ++i) {
      ++files;
      if (i < runs[1].size() && runs[0][i] == runs[1][i] && !runs[0][i].empty()) ++identical;
    }
  }
  unsetenv("OBNC_THREADS");
  fs::remove_all(root);
  return {files > 0 && identical == files,
          fmt("%d/%d CSVs byte-identical across reruns (1 vs 4 worker threads, elapsed_ms "
              "excluded), all five experiments",
              identical, files)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, Verdict (*)()>> all{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},  {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& [id, fn] : all) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto start = Clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("CRITERION %d %s (%.1fs): %s\n", id, v.pass ? "PASS" : "FAIL", secs,
                v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
