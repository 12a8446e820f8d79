// obnc: experiment runner and state diagnostics.
//
//   obnc run <config> [section.key=value ...]
//   obnc diagnose <state> [--tol 1e-8]
//   obnc export-nc <d> <K> <n> <tau> <path> [--seed S]
//
// Exit codes: 0 ok, 1 other failure, 2 malformed input, 3 infeasible dimensions.

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "obnc/errors.hpp"
#include "obnc/experiment.hpp"
#include "obnc/saddle.hpp"
#include "obnc/state_io.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitMalformed = 2;
constexpr int kExitInfeasible = 3;

int cmd_run(const std::string& path, const std::vector<std::string>& overrides) {
  obnc::ExperimentConfig config;
  try {
    obnc::Config cfg = obnc::Config::load(path);
    for (const std::string& kv : overrides) cfg.apply_override(kv);
    config = obnc::ExperimentConfig::from_config(cfg);
  } catch (const obnc::ParseError& e) {
    if (e.line() > 0)
      std::fprintf(stderr, "%s:%zu:%zu: %s\n", path.c_str(), e.line(), e.column(), e.what());
    else
      std::fprintf(stderr, "%s: %s\n", path.c_str(), e.what());
    return kExitMalformed;
  }

  const obnc::ExperimentResult result = obnc::run_experiment(config);
  std::printf("%-6s %4s %10s %8s %22s %22s %10s %s\n", "solver", "K", "tau", "param",
              "reference", "mean_final_f", "abs_gap", "success");
  for (const obnc::SummaryRow& r : result.summary)
    std::printf("%-6s %4d %10g %8g %22.15g %22.15g %10.3g %d/%d\n", r.solver.c_str(), r.k,
                r.tau, r.param, r.theoretical_ref, r.mean_final_f, r.abs_gap, r.success_count,
                r.trials);
  for (const std::string& f : result.files) std::printf("wrote %s\n", f.c_str());
  return 0;
}

void print_certificate(const obnc::SaddleCertificate& c) {
  std::printf("certificate       %s\n", obnc::saddle_case_name(c.case_tag).c_str());
  std::printf("  hess_value      %.17g\n", c.hess_value);
  std::printf("  tau_bound       %.17g\n", c.tau_bound);
  std::printf("  hypothesis      %s\n", c.hypothesis_holds ? "holds" : "violated");
  if (c.case_tag == obnc::SaddleCase::kRankOneW) {
    std::printf("  proof_bound     %.17g\n", c.proof_bound);
    std::printf("  |H^T a|^2       %.6g\n", c.ht_a_sq);
  } else {
    std::printf("  proof_value     %.17g\n", c.proof_value);
    std::printf("  |grad g|_2      %.17g\n", c.grad_g_norm);
  }
}

int cmd_diagnose(const std::string& path, double tol) {
  std::optional<obnc::StateFile> file;
  try {
    file.emplace(obnc::read_state(path));
  } catch (const obnc::ParseError& e) {
    std::fprintf(stderr, "%s: %s\n", path.c_str(), e.what());
    return kExitMalformed;
  }
  const obnc::UfmProblem& p = file->problem;
  const obnc::UfmState& s = file->state;
  const obnc::LocalModel model = obnc::local_model(p, s);
  const double gnorm = model.riem.w.norm() + model.riem.h.norm();
  const bool ce = p.spec().kind == obnc::LossKind::kCrossEntropy;

  std::printf("loss              %s", obnc::loss_name(p.spec().kind).c_str());
  if (p.spec().kind == obnc::LossKind::kFocal || p.spec().kind == obnc::LossKind::kLabelSmoothing)
    std::printf(" %g", p.spec().param);
  std::printf("\nd K n tau         %d %d %d %g\n", p.dim(), p.num_classes(), p.per_class(),
              p.tau());
  std::printf("f                 %.17g\n", model.value);
  if (p.dim() >= p.num_classes()) {
    const double ref = obnc::reference_value(p);
    std::printf("reference         %.17g\n", ref);
    std::printf("gap               %.6g\n", model.value - ref);
  }
  std::printf("grad_norm         %.6g\n", gnorm);
  if (p.spec().has_classifier()) {
    const obnc::AlphaBeta ab = obnc::alpha_beta(p, s, model);
    std::printf("alpha             min %.6g  max %.6g\n", ab.alpha.minCoeff(), ab.alpha.maxCoeff());
    std::printf("beta              min %.6g  max %.6g  min|.| %.6g\n", ab.beta.minCoeff(),
                ab.beta.maxCoeff(), ab.beta.cwiseAbs().minCoeff());
    std::printf("|grad g|_2        %.6g\n",
                obnc::top_singular_pair(model.head_grad, 1000, 1e-14).sigma);
  }
  const obnc::NcMetrics nc = obnc::nc_metrics(p, s);
  std::printf("nc1 nc2 nc3       %.6g %.6g %.6g\n", nc.nc1, nc.nc2, nc.nc3);
  if (p.spec().has_classifier())
    std::printf("accuracy          %.6g\n", obnc::train_accuracy(p, s));

  const bool critical = gnorm <= tol;
  std::string verdict = critical ? "CRITICAL" : "NOT_CRITICAL";
  std::optional<obnc::SaddleCertificate> cert;
  if (critical && ce) {
    if (obnc::global_certificate(p, s, tol)) {
      verdict = "GLOBAL";
    } else {
      try {
        cert = obnc::certify_strict_saddle(p, s, tol);
        if (cert->hess_value < 0.0) verdict = "STRICT_SADDLE";
      } catch (const obnc::Error& e) {
        std::printf("certificate       unavailable (%s)\n", e.what());
      }
    }
  }
  std::printf("verdict           %s\n", verdict.c_str());
  if (cert) print_certificate(*cert);
  return 0;
}

int cmd_export(int d, int k, int n, double tau, const std::string& path, std::uint64_t seed) {
  if (d < k) {
    std::fprintf(stderr, "infeasible: the simplex ETF needs d >= K (d = %d, K = %d)\n", d, k);
    return kExitInfeasible;
  }
  const obnc::UfmProblem problem(d, k, n, obnc::LossSpec::cross_entropy(tau));
  obnc::write_state(path, problem, obnc::nc_solution(problem, seed));
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Riemannian optimization of unconstrained-feature-model losses"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  CLI::App* run = app.add_subcommand("run", "Run a configured experiment sweep");
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("overrides", overrides, "section.key=value overrides");

  std::string state_path;
  double tol = 1e-8;
  CLI::App* diag = app.add_subcommand("diagnose", "Report optimality diagnostics for a state file");
  diag->add_option("state", state_path, "State file")->required();
  diag->add_option("--tol", tol, "Criticality tolerance")->capture_default_str();

  int d = 0, k = 0, n = 0;
  double tau = 1.0;
  std::string out_path;
  std::uint64_t seed = 0;
  CLI::App* exp = app.add_subcommand("export-nc", "Write a neural-collapse solution as a state file");
  exp->add_option("d", d)->required();
  exp->add_option("K", k)->required();
  exp->add_option("n", n)->required();
  exp->add_option("tau", tau)->required();
  exp->add_option("path", out_path)->required();
  exp->add_option("--seed", seed, "Seed for the random rotation")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitMalformed;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, overrides);
    if (diag->parsed()) return cmd_diagnose(state_path, tol);
    return cmd_export(d, k, n, tau, out_path, seed);
  } catch (const obnc::InfeasibleDimensionError& e) {
    std::fprintf(stderr, "infeasible: %s\n", e.what());
    return kExitInfeasible;
  } catch (const obnc::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitMalformed;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
}
