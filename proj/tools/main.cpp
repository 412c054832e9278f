#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pdeopt/experiments.hpp"
#include "pdeopt/verify.hpp"

namespace {

using namespace pdeopt;

struct CommonArgs {
  std::string config_path;
  std::string out_path;
  std::string format = "csv";
  bool deterministic = false;
  int threads = 0;  // 0 = keep config value
  int n = 0;
  std::vector<double> phi;
  std::string physics;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON experiment config (see README)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out_path,
                  "output path (existing rows for the same config hash are reused)");
  cmd->add_option("--format", args.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_flag("--deterministic", args.deterministic,
                "fixed reduction order; wall-time columns still vary");
  cmd->add_option("--threads", args.threads, "subdomain worker threads");
  cmd->add_option("--n", args.n, "elements per axis override");
  cmd->add_option("--phi", args.phi, "regularization sweep override (descending)");
  cmd->add_option("--physics", args.physics, "heat or elasticity")
      ->check(CLI::IsMember({"heat", "elasticity"}));
}

ExperimentConfig build_config(ExperimentKind kind, const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!args.config_path.empty()) {
    std::ifstream is(args.config_path);
    std::stringstream buf;
    buf << is.rdbuf();
    cfg = ExperimentConfig::from_json(buf.str());
    if (cfg.kind != kind) throw ContractError("config kind does not match the chosen subcommand");
  } else {
    cfg = ExperimentConfig::defaults_for(kind);
  }
  if (!args.physics.empty()) {
    const auto requested =
        args.physics == "heat" ? PhysicsKind::Heat : PhysicsKind::PlaneStrainElasticity;
    if (requested != cfg.physics && args.config_path.empty() &&
        kind == ExperimentKind::PhiSweep && requested == PhysicsKind::PlaneStrainElasticity) {
      // cantilever sweep defaults: smaller mesh, 6x2 subdomains, 1e-9 threshold
      cfg.physics = requested;
      cfg.n = 12;
      cfg.s_x = 6;
      cfg.s_y = 2;
      cfg.phi.clear();
      for (int e = 7; e <= 18; ++e) cfg.phi.push_back(std::pow(10.0, -e));
      cfg.feti_tol = 1e-9;
    } else {
      cfg.physics = requested;
    }
  }
  if (args.n > 0) cfg.n = args.n;
  if (!args.phi.empty()) cfg.phi = args.phi;
  if (args.deterministic) cfg.deterministic = true;
  if (args.threads > 0) cfg.threads = args.threads;
  if (const char* env = std::getenv("PDEOPT_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) cfg.threads = t;  // env var overrides the flag
  }
  cfg.validate();
  return cfg;
}

int run_and_emit(ExperimentKind kind, const CommonArgs& args) {
  const ExperimentConfig cfg = build_config(kind, args);
  const auto rows = run_experiment(cfg, args.out_path);
  if (!args.out_path.empty()) {
    emit_rows(rows, args.format, args.out_path, /*allow_empty=*/rows.empty());
    std::cout << rows.size() << " rows -> " << args.out_path << " (config " << cfg.hash() << ")\n";
  } else {
    std::cout << (args.format == "json" ? rows_to_json(rows) : rows_to_csv(rows));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed optimal control experiments (complex Schur factorization + FETI-DP)"};
  app.require_subcommand(1);

  CommonArgs sweep_args, scal_args, precond_args, cliff_args;
  auto* sweep =
      app.add_subcommand("phi-sweep", "range-space FETI-DPH solves across a regularization sweep");
  add_common(sweep, sweep_args);
  auto* scal =
      app.add_subcommand("scalability", "iteration counts across mesh refinements at fixed H/h");
  add_common(scal, scal_args);
  auto* precond = app.add_subcommand(
      "precond-compare", "full-space method: Pearson-Wathen vs complex factorization backends");
  add_common(precond, precond_args);
  auto* cliff = app.add_subcommand("accuracy-cliff",
                                   "range-space vs full-space accuracy across regularization");
  add_common(cliff, cliff_args);
  auto* verify = app.add_subcommand("verify", "run the oracle/property acceptance suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sweep->parsed()) return run_and_emit(ExperimentKind::PhiSweep, sweep_args);
    if (scal->parsed()) return run_and_emit(ExperimentKind::Scalability, scal_args);
    if (precond->parsed()) return run_and_emit(ExperimentKind::PrecondCompare, precond_args);
    if (cliff->parsed()) return run_and_emit(ExperimentKind::AccuracyCliff, cliff_args);
    if (verify->parsed()) return pdeopt::run_acceptance_report(std::cout) == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
