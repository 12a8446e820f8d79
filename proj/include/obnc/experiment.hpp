#pragma once

// Config-driven parameter sweeps written as CSV tables.
//
// Per-iteration CSV (<output>/<experiment>.csv):
//   experiment,solver,loss,K,tau,param,trial,iter,f,grad_norm,nc1,nc2,nc3,accuracy,elapsed_ms
// Summary CSV (<output>/<experiment>_summary.csv):
//   experiment,solver,loss,K,tau,param,trials,theoretical_ref,mean_final_f,abs_gap,
//   mean_nc1,mean_nc2,mean_nc3,mean_iterations,mean_iters_to_full_accuracy,
//   success_count,failure_count
// saddle_demo also writes <output>/saddle_demo_certificates.csv.

#include <cstdint>
#include <string>
#include <vector>

#include "obnc/config.hpp"
#include "obnc/solvers.hpp"

namespace obnc {

enum class ExperimentKind { kLowerBoundSweep, kTauSweep, kSolverRace, kOtherLosses, kSaddleDemo };

std::string experiment_name(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kLowerBoundSweep;
  int d = 100;
  int n = 5;
  std::vector<int> ks{10};
  std::vector<double> taus{1.0};
  LossKind loss = LossKind::kCrossEntropy;
  std::vector<double> params{0.0};     // gamma (focal) or alpha (ls)
  std::vector<std::string> solvers{"rgd"};  // rgd, rcg, rtr; solver_race also takes egd
  SolverConfig solver;
  double lambda = 1e-4;       // baseline weight and feature decay
  double success_tol = 1e-3;  // |final f - reference| for a trial to count as a success
  double saddle_noise = 1e-6;
  int trials = 1;
  std::uint64_t seed0 = 0;
  std::string output = ".";

  /// Reads the [experiment], [problem], [solver], [line_search],
  /// [trust_region], [baseline] and [saddle] sections. Unknown keys and bad
  /// values raise ParseError at their position.
  static ExperimentConfig from_config(const Config& cfg);
};

struct TrialResult {
  std::string solver;
  int k = 0;
  double tau = 0.0;
  double param = 0.0;
  int trial = 0;
  std::vector<TraceRecord> records;
  bool ok = false;        // finished without throwing
  bool success = false;   // ok and within success_tol of the reference
  std::string status;
  double final_f = 0.0;
  NcMetrics final_nc;
  int iterations = 0;
  int iters_to_full_accuracy = -1;
  // saddle_demo only
  std::string cert_case;
  double hess_value = 0.0;
  double proof_bound = 0.0;
  double tau_bound = 0.0;
  double ht_a_sq = 0.0;
  bool hypothesis_holds = false;
};

struct SummaryRow {
  std::string solver;
  int k = 0;
  double tau = 0.0;
  double param = 0.0;
  int trials = 0;
  double theoretical_ref = 0.0;
  double mean_final_f = 0.0;
  double abs_gap = 0.0;
  double mean_nc1 = 0.0, mean_nc2 = 0.0, mean_nc3 = 0.0;
  double mean_iterations = 0.0;
  double mean_iters_to_full_accuracy = 0.0;
  int success_count = 0;
  int failure_count = 0;
};

struct ExperimentResult {
  std::vector<TrialResult> trials;  // deterministic order: grid, solver, trial
  std::vector<SummaryRow> summary;
  std::vector<std::string> files;
};

/// Reference value of f for a problem: the lower bound for CE, the LS value
/// at an NC solution for label smoothing, and f at an NC solution for focal
/// and SC (the latter two have no closed form).
double reference_value(const UfmProblem& problem);

/// Runs the sweep on a pool of min(OBNC_THREADS, hardware threads) workers
/// and writes the CSVs. Throws InfeasibleDimensionError if some K > d.
/// Trial failures are recorded, never thrown.
ExperimentResult run_experiment(const ExperimentConfig& config);

std::string trace_csv(const ExperimentConfig& config, const ExperimentResult& result);
std::string summary_csv(const ExperimentConfig& config, const ExperimentResult& result);
std::string certificates_csv(const ExperimentConfig& config, const ExperimentResult& result);

}  // namespace obnc
