#include <gtest/gtest.h>

#include <filesystem>
#include <regex>

#include "obnc/errors.hpp"
#include "obnc/experiment.hpp"

namespace {

using namespace obnc;
namespace fs = std::filesystem;

std::string scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("obnc_test_" + name);
  fs::remove_all(p);
  return p.string();
}

ExperimentConfig small(ExperimentKind kind, const std::string& out) {
  ExperimentConfig c;
  c.kind = kind;
  c.d = 12;
  c.n = 3;
  c.ks = {3, 5};
  c.taus = {1.0};
  c.trials = 2;
  c.solver.max_iters = 300;
  c.output = out;
  return c;
}

std::string strip_elapsed(const std::string& csv) {
  return std::regex_replace(csv, std::regex(",[0-9.]+\n"), "\n");
}

TEST(ExperimentConfig, ParsesSectionsAndRejectsUnknownKeys) {
  const Config cfg = Config::parse(
      "[experiment]\nname = tau_sweep\ntrials = 3\nseed0 = 9\n[problem]\nd = 32\nK = 4\n"
      "tau = 0.5, 2\nloss = ls\nparam = 0.1\n[solver]\nname = rgd, rtr\n[trust_region]\n"
      "eta1 = 0.2\n");
  const ExperimentConfig c = ExperimentConfig::from_config(cfg);
  EXPECT_EQ(c.kind, ExperimentKind::kTauSweep);
  EXPECT_EQ(c.trials, 3);
  EXPECT_EQ(c.seed0, 9u);
  EXPECT_EQ(c.loss, LossKind::kLabelSmoothing);
  EXPECT_EQ(c.taus, (std::vector<double>{0.5, 2.0}));
  EXPECT_EQ(c.solver.tr.eta1, 0.2);

  try {
    ExperimentConfig::from_config(Config::parse("[experiment]\nname = tau_sweep\n[problem]\nfoo = 1\n"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  EXPECT_THROW(ExperimentConfig::from_config(Config::parse("[experiment]\nname = nope\n")),
               ParseError);
  EXPECT_THROW(ExperimentConfig::from_config(
                   Config::parse("[experiment]\nname = tau_sweep\n[experiment]\ntrials = 0\n")),
               ParseError);
  EXPECT_THROW(ExperimentConfig::from_config(Config::parse(
                   "[experiment]\nname = lower_bound_sweep\n[problem]\nloss = focal\n")),
               ParseError);
  EXPECT_THROW(ExperimentConfig::from_config(Config::parse(
                   "[experiment]\nname = tau_sweep\n[problem]\nloss = sc\n[solver]\nname = rtr\n")),
               ParseError);
}

TEST(Experiment, LowerBoundSweepWritesCsvs) {
  const std::string out = scratch_dir("lb");
  const ExperimentResult r = run_experiment(small(ExperimentKind::kLowerBoundSweep, out));
  ASSERT_EQ(r.trials.size(), 4u);
  ASSERT_EQ(r.summary.size(), 2u);
  for (const SummaryRow& row : r.summary) {
    EXPECT_LE(row.abs_gap, 1e-3);
    EXPECT_EQ(row.success_count, 2);
  }
  ASSERT_EQ(r.files.size(), 2u);
  for (const std::string& f : r.files) EXPECT_TRUE(fs::exists(f));
}

TEST(Experiment, RerunIsByteIdenticalWithoutTiming) {
  setenv("OBNC_THREADS", "3", 1);
  const ExperimentConfig c = small(ExperimentKind::kLowerBoundSweep, scratch_dir("det"));
  const ExperimentResult a = run_experiment(c), b = run_experiment(c);
  EXPECT_EQ(strip_elapsed(trace_csv(c, a)), strip_elapsed(trace_csv(c, b)));
  EXPECT_EQ(summary_csv(c, a), summary_csv(c, b));
  unsetenv("OBNC_THREADS");
}

TEST(Experiment, InfeasibleDimensions) {
  ExperimentConfig c = small(ExperimentKind::kLowerBoundSweep, scratch_dir("inf"));
  c.ks = {13};
  EXPECT_THROW(run_experiment(c), InfeasibleDimensionError);
}

TEST(Experiment, SaddleDemoCertificates) {
  ExperimentConfig c = small(ExperimentKind::kSaddleDemo, scratch_dir("saddle"));
  c.ks = {5};
  c.solvers = {"rtr"};
  c.solver.grad_tol = 1e-10;
  const ExperimentResult r = run_experiment(c);
  ASSERT_EQ(r.files.size(), 3u);
  for (const TrialResult& t : r.trials) {
    EXPECT_EQ(t.cert_case, "RankOneW");
    EXPECT_LT(t.hess_value, 0.0);
    EXPECT_NEAR(t.final_f, global_lower_bound(5, 1.0), 1e-6);
  }
  const std::string csv = certificates_csv(c, r);
  EXPECT_NE(csv.find(",RankOneW,"), std::string::npos);
}

TEST(Experiment, FailedTrialsAreRecordedNotThrown) {
  ExperimentConfig c = small(ExperimentKind::kTauSweep, scratch_dir("fail"));
  c.ks = {3};
  c.trials = 1;
  c.solver.line_search.max_expansions = 1;
  c.solver.line_search.bracket_max = 1e-300;
  const ExperimentResult r = run_experiment(c);
  ASSERT_EQ(r.summary.size(), 1u);
  EXPECT_EQ(r.summary[0].failure_count, 1);
}

TEST(Experiment, OtherLossReferences) {
  const UfmProblem focal(16, 3, 3, LossSpec::focal(3.0, 1.0));
  EXPECT_NEAR(reference_value(focal), f_value(focal, nc_solution(focal, 5)), 1e-14);
  const UfmProblem ls(16, 3, 3, LossSpec::label_smoothing(0.1, 1.0));
  EXPECT_EQ(reference_value(ls), ls_nc_value(3, 1.0, 0.1));
}

}  // namespace
