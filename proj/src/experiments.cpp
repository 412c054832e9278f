#include "pdeopt/experiments.hpp"

#include <cstdio>
#include <memory>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pdeopt {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string physics_name(PhysicsKind kind) {
  return kind == PhysicsKind::Heat ? "heat" : "elasticity";
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string sanitize_note(std::string text) {
  for (char& c : text) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return text;
}

ControlProblem build_problem(const ExperimentConfig& config, int n, double phi) {
  if (config.physics == PhysicsKind::Heat) return make_thermal_problem(n, phi);
  return make_cantilever_problem(n, phi, config.pressure);
}

FactorSolverConfig feti_factor_config(const ExperimentConfig& config, bool augment, double tol) {
  FactorSolverConfig f;
  f.method = FactorMethod::FetiDp;
  f.tol = tol;
  f.feti.s_x = config.s_x;
  f.feti.s_y = config.s_y;
  f.feti.augment = augment;
  f.feti.tol = tol;
  f.feti.threads = config.threads;
  f.feti.max_iter = 2000;
  return f;
}

ResultRow base_row(const ExperimentConfig& config, const ControlProblem& p, double phi) {
  ResultRow row;
  row.experiment = experiment_kind_name(config.kind);
  row.config_hash = config.hash();
  row.physics = physics_name(config.physics);
  row.n = p.mesh.n_y;  // elements across the unit thickness
  row.dofs = p.n();
  row.elements = p.mesh.n_elements();
  row.h = p.mesh.h;
  row.H = p.mesh.len_x / config.s_x;
  row.s_x = config.s_x;
  row.s_y = config.s_y;
  row.nsub = config.s_x * config.s_y;
  row.phi = phi;
  return row;
}

bool take_cached(const RowCache* cache, const ResultRow& planned, std::vector<ResultRow>& rows) {
  if (!cache) return false;
  const auto it = cache->find(planned.key());
  if (it == cache->end()) return false;
  rows.push_back(it->second);
  return true;
}

void fill_diagnostics(ResultRow& row, const ControlProblem& p, const SolutionTriple& sol) {
  const auto rep = diagnostics(p, sol);
  row.constraint_violation = rep.constraint_violation;
  row.target_mismatch = rep.target_mismatch;
  row.control_norm = rep.control_norm;
  row.objective = rep.objective;
  row.imag_leak = sol.imag_leak;
}

}  // namespace

std::string experiment_kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::PhiSweep:
      return "phi_sweep";
    case ExperimentKind::Scalability:
      return "scalability";
    case ExperimentKind::PrecondCompare:
      return "precond_compare";
    case ExperimentKind::AccuracyCliff:
      return "accuracy_cliff";
  }
  throw ContractError("experiment_kind_name: unknown kind");
}

ExperimentKind experiment_kind_from_name(const std::string& name) {
  if (name == "phi_sweep") return ExperimentKind::PhiSweep;
  if (name == "scalability") return ExperimentKind::Scalability;
  if (name == "precond_compare") return ExperimentKind::PrecondCompare;
  if (name == "accuracy_cliff") return ExperimentKind::AccuracyCliff;
  throw ContractError("unknown experiment kind '" + name + "'");
}

ExperimentConfig ExperimentConfig::defaults_for(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::PhiSweep:
      c.physics = PhysicsKind::Heat;
      c.n = 64;
      c.s_x = c.s_y = 8;
      for (int e = 2; e <= 12; ++e) c.phi.push_back(2.0 * std::pow(10.0, -e));
      c.feti_tol = 1e-10;
      break;
    case ExperimentKind::Scalability:
      c.physics = PhysicsKind::Heat;
      c.mesh_sizes = {16, 32, 64};
      c.ratio = 8;
      c.phi = {2e-8};
      c.feti_tol = 1e-10;
      break;
    case ExperimentKind::PrecondCompare:
      c.physics = PhysicsKind::PlaneStrainElasticity;
      c.n = 12;
      c.s_x = 6;
      c.s_y = 2;
      for (int e = 7; e <= 14; ++e) c.phi.push_back(std::pow(10.0, -e));
      c.outer_tol = 1e-10;
      c.inner_tol = 1e-9;
      break;
    case ExperimentKind::AccuracyCliff:
      c.physics = PhysicsKind::PlaneStrainElasticity;
      c.n = 24;
      c.s_x = 6;
      c.s_y = 2;
      // Window covering this problem's range-space degeneration; the cliff of
      // the 2D rubber cantilever sits at much smaller phi than in 3D.
      for (int e = 7; e <= 16; ++e) c.phi.push_back(std::pow(10.0, -e));
      c.outer_tol = 1e-9;
      c.inner_tol = 1e-12;
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  // an empty phi sweep is allowed and yields an empty row set
  for (double p : phi)
    if (!(p > 0.0)) throw ContractError("ExperimentConfig: phi values must be positive");
  for (std::size_t i = 1; i < phi.size(); ++i)
    if (!(phi[i] < phi[i - 1]))
      throw ContractError("ExperimentConfig: phi list must be sorted strictly descending");
  if (n < 2) throw ContractError("ExperimentConfig: n must be at least 2");
  if (threads < 1) throw ContractError("ExperimentConfig: threads must be at least 1");
}

std::string ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["kind"] = experiment_kind_name(kind);
  j["physics"] = physics_name(physics);
  j["n"] = n;
  j["s_x"] = s_x;
  j["s_y"] = s_y;
  j["phi"] = phi;
  j["feti_tol"] = feti_tol;
  j["outer_tol"] = outer_tol;
  j["inner_tol"] = inner_tol;
  j["augment"] = augment;
  j["deterministic"] = deterministic;
  j["threads"] = threads;
  j["seed"] = seed;
  j["mesh_sizes"] = mesh_sizes;
  j["ratio"] = ratio;
  j["pressure"] = pressure;
  return j.dump();
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ExperimentConfig base = defaults_for(experiment_kind_from_name(j.at("kind").get<std::string>()));
  ExperimentConfig c = base;
  if (j.contains("physics")) {
    const std::string p = j["physics"].get<std::string>();
    if (p == "heat")
      c.physics = PhysicsKind::Heat;
    else if (p == "elasticity" || p == "plane_strain_elasticity")
      c.physics = PhysicsKind::PlaneStrainElasticity;
    else
      throw ContractError("ExperimentConfig: unknown physics '" + p + "'");
  }
  c.n = j.value("n", base.n);
  c.s_x = j.value("s_x", base.s_x);
  c.s_y = j.value("s_y", base.s_y);
  if (j.contains("phi")) c.phi = j["phi"].get<std::vector<double>>();
  c.feti_tol = j.value("feti_tol", base.feti_tol);
  c.outer_tol = j.value("outer_tol", base.outer_tol);
  c.inner_tol = j.value("inner_tol", base.inner_tol);
  c.augment = j.value("augment", base.augment);
  c.deterministic = j.value("deterministic", base.deterministic);
  c.threads = j.value("threads", base.threads);
  c.seed = j.value("seed", base.seed);
  if (j.contains("mesh_sizes")) c.mesh_sizes = j["mesh_sizes"].get<std::vector<int>>();
  c.ratio = j.value("ratio", base.ratio);
  c.pressure = j.value("pressure", base.pressure);
  c.validate();
  return c;
}

std::string ExperimentConfig::hash() const {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json())));
  return buf;
}

std::string ResultRow::key() const {
  std::ostringstream os;
  os << experiment << '|' << physics << '|' << n << '|' << s_x << 'x' << s_y << '|' << fmt17(phi)
     << '|' << method << '|' << backend << '|' << (augment ? 1 : 0);
  return os.str();
}

// ---------------------------------------------------------------------------
// Experiment drivers

std::vector<ResultRow> run_phi_sweep(const ExperimentConfig& config, const RowCache* cached) {
  config.validate();
  std::vector<ResultRow> rows;
  for (double phi : config.phi) {
    std::unique_ptr<ControlProblem> lazy;
    auto problem = [&]() -> const ControlProblem& {
      if (!lazy) lazy = std::make_unique<ControlProblem>(build_problem(config, config.n, phi));
      return *lazy;
    };
    for (bool augment : {false, true}) {
      detail::WallTimer timer;
      const ControlProblem& p = problem();
      ResultRow row = base_row(config, p, phi);
      row.method = "range_space";
      row.backend = augment ? "feti_aug" : "feti";
      row.augment = augment;
      if (take_cached(cached, row, rows)) continue;
      try {
        const auto cfg = feti_factor_config(config, augment, config.feti_tol);
        const auto out = solve_range_space(p, cfg);
        row.iters_plus = out.plus_stats.iterations;
        row.iters_minus = out.minus_stats.iterations;
        row.converged = out.converged;
        row.relative_residual =
            std::max(out.plus_stats.relative_residual, out.minus_stats.relative_residual);
        row.build_seconds = out.factor_setup_seconds;
        row.per_solve_seconds = out.plus_stats.wall_time + out.minus_stats.wall_time;
        fill_diagnostics(row, p, out.solution);
      } catch (const std::exception& e) {
        row.error = sanitize_note(e.what());
        row.converged = false;
      }
      row.total_seconds = timer.seconds();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<ResultRow> run_scalability(const ExperimentConfig& config, const RowCache* cached) {
  config.validate();
  if (config.physics != PhysicsKind::Heat)
    throw ContractError("run_scalability: the scalability study runs on the thermal problem");
  const double phi = config.phi.empty() ? 2e-8 : config.phi.front();
  std::vector<ResultRow> rows;
  for (int n : config.mesh_sizes) {
    if (n % config.ratio != 0)
      throw ContractError("run_scalability: mesh size must be divisible by the H/h ratio");
    const int s = n / config.ratio;
    ExperimentConfig local = config;
    local.n = n;
    local.s_x = local.s_y = s;
    const ControlProblem p = build_problem(local, n, phi);
    detail::WallTimer timer;
    ResultRow row = base_row(local, p, phi);
    row.method = "range_space";
    row.backend = config.augment ? "feti_aug" : "feti";
    row.augment = config.augment;
    if (take_cached(cached, row, rows)) continue;
    try {
      const auto cfg = feti_factor_config(local, config.augment, config.feti_tol);
      const auto out = solve_range_space(p, cfg);
      row.iters_plus = out.plus_stats.iterations;
      row.iters_minus = out.minus_stats.iterations;
      row.converged = out.converged;
      row.relative_residual =
          std::max(out.plus_stats.relative_residual, out.minus_stats.relative_residual);
      row.build_seconds = out.factor_setup_seconds;
      row.per_solve_seconds = out.plus_stats.wall_time + out.minus_stats.wall_time;
      fill_diagnostics(row, p, out.solution);
    } catch (const std::exception& e) {
      row.error = sanitize_note(e.what());
      row.converged = false;
    }
    row.total_seconds = timer.seconds();
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ResultRow> run_precond_compare(const ExperimentConfig& config,
                                           const RowCache* cached) {
  config.validate();
  std::vector<ResultRow> rows;
  for (double phi : config.phi) {
    std::unique_ptr<ControlProblem> lazy;
    auto problem = [&]() -> const ControlProblem& {
      if (!lazy) lazy = std::make_unique<ControlProblem>(build_problem(config, config.n, phi));
      return *lazy;
    };
    SolutionTriple sols[2];
    bool have[2] = {false, false};
    int at = 0;
    bool any_cached = false;
    for (const auto backend : {FullSpacePrecond::PmgwSp, FullSpacePrecond::PmgwSc}) {
      detail::WallTimer timer;
      const ControlProblem& p = problem();
      ResultRow row = base_row(config, p, phi);
      row.method = "full_space";
      row.backend = backend == FullSpacePrecond::PmgwSp ? "sp" : "sc";
      row.augment = true;  // the inner FETI-DPH solves use edge augmentation
      if (take_cached(cached, row, rows)) {
        any_cached = true;
        ++at;
        continue;
      }
      try {
        FullSpaceOptions opt;
        opt.precond = backend;
        opt.outer = OuterSolver::Gmres;
        opt.tol = config.outer_tol;
        opt.max_iter = 2000;
        opt.inner = feti_factor_config(config, true, config.inner_tol);
        const auto out = solve_full_space(p, opt);
        row.outer_iters = out.stats.iterations;
        row.converged = out.stats.converged;
        row.relative_residual = out.stats.relative_residual;
        row.build_seconds = out.precond_setup_seconds;
        row.per_solve_seconds =
            out.stats.iterations > 0 ? out.stats.wall_time / out.stats.iterations : 0.0;
        fill_diagnostics(row, p, out.solution);
        sols[at] = out.solution;
        have[at] = true;
      } catch (const std::exception& e) {
        row.error = sanitize_note(e.what());
        row.converged = false;
      }
      row.total_seconds = timer.seconds();
      rows.push_back(std::move(row));
      ++at;
    }
    if (have[0] && have[1] && !any_cached) {
      const Eigen::Index dim = sols[0].y.size() + sols[0].u.size() + sols[0].lambda.size();
      Vec a(dim), b(dim);
      a << sols[0].y, sols[0].u, sols[0].lambda;
      b << sols[1].y, sols[1].u, sols[1].lambda;
      const double gap = (a - b).norm() / std::max(b.norm(), 1e-300);
      rows[rows.size() - 1].cross_agreement = gap;
      rows[rows.size() - 2].cross_agreement = gap;
    }
  }
  return rows;
}

std::vector<ResultRow> run_accuracy_cliff(const ExperimentConfig& config,
                                          const RowCache* cached) {
  config.validate();
  std::vector<ResultRow> rows;
  for (double phi : config.phi) {
    std::unique_ptr<ControlProblem> lazy;
    auto problem = [&]() -> const ControlProblem& {
      if (!lazy) lazy = std::make_unique<ControlProblem>(build_problem(config, config.n, phi));
      return *lazy;
    };

    {
      detail::WallTimer timer;
      const ControlProblem& p = problem();
      ResultRow row = base_row(config, p, phi);
      row.method = "range_space";
      row.backend = "direct";
      if (!take_cached(cached, row, rows)) try {
        FactorSolverConfig cfg;  // near-exact sparse LU factor solves
        const auto out = solve_range_space(p, cfg);
        row.iters_plus = out.plus_stats.iterations;
        row.iters_minus = out.minus_stats.iterations;
        row.converged = out.converged;
        row.relative_residual =
            std::max(out.plus_stats.relative_residual, out.minus_stats.relative_residual);
        fill_diagnostics(row, p, out.solution);
        row.total_seconds = timer.seconds();
        rows.push_back(std::move(row));
      } catch (const std::exception& e) {
        row.error = sanitize_note(e.what());
        row.converged = false;
        row.total_seconds = timer.seconds();
        rows.push_back(std::move(row));
      }
    }

    {
      detail::WallTimer timer;
      const ControlProblem& p = problem();
      ResultRow row = base_row(config, p, phi);
      row.method = "full_space";
      row.backend = "sc";
      if (!take_cached(cached, row, rows)) try {
        FullSpaceOptions opt;
        opt.precond = FullSpacePrecond::PmgwSc;
        opt.outer = OuterSolver::Gmres;
        opt.tol = config.outer_tol;
        opt.max_iter = 300;
        opt.inner.method = FactorMethod::DirectLu;
        opt.inner.tol = config.inner_tol;
        opt.refine_sweeps = 2;  // block residuals below the norm-wise floor
        const auto out = solve_full_space(p, opt);
        row.outer_iters = out.stats.iterations;
        row.converged = out.stats.converged;
        row.relative_residual = out.stats.relative_residual;
        fill_diagnostics(row, p, out.solution);
        row.total_seconds = timer.seconds();
        rows.push_back(std::move(row));
      } catch (const std::exception& e) {
        row.error = sanitize_note(e.what());
        row.converged = false;
        row.total_seconds = timer.seconds();
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config, const std::string& out_path) {
  config.validate();
  std::vector<ResultRow> previous;
  if (!out_path.empty() && std::filesystem::exists(out_path)) {
    try {
      previous = parse_rows_file(out_path);
    } catch (const std::exception&) {
      previous.clear();  // unreadable caches are recomputed
    }
  }
  const std::string hash = config.hash();
  RowCache cache;
  for (auto& row : previous)
    if (row.config_hash == hash) cache.emplace(row.key(), row);
  const RowCache* cptr = cache.empty() ? nullptr : &cache;

  switch (config.kind) {
    case ExperimentKind::PhiSweep:
      return run_phi_sweep(config, cptr);
    case ExperimentKind::Scalability:
      return run_scalability(config, cptr);
    case ExperimentKind::PrecondCompare:
      return run_precond_compare(config, cptr);
    case ExperimentKind::AccuracyCliff:
      return run_accuracy_cliff(config, cptr);
  }
  throw ContractError("run_experiment: unknown kind");
}

void emit_rows(const std::vector<ResultRow>& rows, const std::string& format,
               const std::string& path, bool allow_empty) {
  if (rows.empty() && !allow_empty)
    throw ContractError("emit_rows: refusing to write an empty result set (pass allow_empty)");
  std::string text;
  if (format == "csv")
    text = rows_to_csv(rows);
  else if (format == "json")
    text = rows_to_json(rows);
  else
    throw ContractError("emit_rows: unknown format '" + format + "'");
  std::ofstream os(path);
  if (!os) throw NumericalError("emit_rows: cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw NumericalError("emit_rows: write failed for '" + path + "'");
}

std::vector<std::string> result_columns() {
  return {"schema_version",
          "experiment",
          "config_hash",
          "physics",
          "n",
          "dofs",
          "elements",
          "h",
          "H",
          "s_x",
          "s_y",
          "nsub",
          "phi",
          "method",
          "backend",
          "augment",
          "iters_minus",
          "iters_plus",
          "outer_iters",
          "converged",
          "relative_residual",
          "constraint_violation",
          "target_mismatch",
          "control_norm",
          "objective",
          "imag_leak",
          "cross_agreement",
          "error",
          "build_seconds",
          "per_solve_seconds",
          "total_seconds"};
}

std::vector<std::string> wall_time_columns() {
  return {"build_seconds", "per_solve_seconds", "total_seconds"};
}

bool rows_equal_ignoring_wall_time(const ResultRow& a, const ResultRow& b) {
  return a.schema_version == b.schema_version && a.experiment == b.experiment &&
         a.config_hash == b.config_hash && a.physics == b.physics && a.n == b.n &&
         a.dofs == b.dofs && a.elements == b.elements && a.h == b.h && a.H == b.H &&
         a.s_x == b.s_x && a.s_y == b.s_y && a.nsub == b.nsub && a.phi == b.phi &&
         a.method == b.method && a.backend == b.backend && a.augment == b.augment &&
         a.iters_minus == b.iters_minus && a.iters_plus == b.iters_plus &&
         a.outer_iters == b.outer_iters && a.converged == b.converged &&
         a.relative_residual == b.relative_residual &&
         a.constraint_violation == b.constraint_violation &&
         a.target_mismatch == b.target_mismatch && a.control_norm == b.control_norm &&
         a.objective == b.objective && a.imag_leak == b.imag_leak &&
         a.cross_agreement == b.cross_agreement && a.error == b.error;
}

std::string rows_to_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "# pdeopt-results schema=1";
  if (!rows.empty()) os << " config=" << rows.front().config_hash;
  os << "\n";
  const auto cols = result_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\n";
  for (const auto& r : rows) {
    os << r.schema_version << ',' << r.experiment << ',' << r.config_hash << ',' << r.physics
       << ',' << r.n << ',' << r.dofs << ',' << r.elements << ',' << fmt17(r.h) << ','
       << fmt17(r.H) << ',' << r.s_x << ',' << r.s_y << ',' << r.nsub << ',' << fmt17(r.phi) << ','
       << r.method << ',' << r.backend << ',' << (r.augment ? 1 : 0) << ',' << r.iters_minus << ','
       << r.iters_plus << ',' << r.outer_iters << ',' << (r.converged ? 1 : 0) << ','
       << fmt17(r.relative_residual) << ',' << fmt17(r.constraint_violation) << ','
       << fmt17(r.target_mismatch) << ',' << fmt17(r.control_norm) << ',' << fmt17(r.objective)
       << ',' << fmt17(r.imag_leak) << ',' << fmt17(r.cross_agreement) << ',' << r.error << ','
       << fmt17(r.build_seconds) << ',' << fmt17(r.per_solve_seconds) << ','
       << fmt17(r.total_seconds) << "\n";
  }
  return os.str();
}

namespace {

nlohmann::json row_to_json_object(const ResultRow& r) {
  nlohmann::json j;
  j["schema_version"] = r.schema_version;
  j["experiment"] = r.experiment;
  j["config_hash"] = r.config_hash;
  j["physics"] = r.physics;
  j["n"] = r.n;
  j["dofs"] = r.dofs;
  j["elements"] = r.elements;
  j["h"] = r.h;
  j["H"] = r.H;
  j["s_x"] = r.s_x;
  j["s_y"] = r.s_y;
  j["nsub"] = r.nsub;
  j["phi"] = r.phi;
  j["method"] = r.method;
  j["backend"] = r.backend;
  j["augment"] = r.augment;
  j["iters_minus"] = r.iters_minus;
  j["iters_plus"] = r.iters_plus;
  j["outer_iters"] = r.outer_iters;
  j["converged"] = r.converged;
  j["relative_residual"] = r.relative_residual;
  j["constraint_violation"] = r.constraint_violation;
  j["target_mismatch"] = r.target_mismatch;
  j["control_norm"] = r.control_norm;
  j["objective"] = r.objective;
  j["imag_leak"] = r.imag_leak;
  j["cross_agreement"] = r.cross_agreement;
  j["error"] = r.error;
  j["build_seconds"] = r.build_seconds;
  j["per_solve_seconds"] = r.per_solve_seconds;
  j["total_seconds"] = r.total_seconds;
  return j;
}

ResultRow row_from_json_object(const nlohmann::json& j) {
  ResultRow r;
  r.schema_version = j.at("schema_version").get<int>();
  r.experiment = j.at("experiment").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.physics = j.at("physics").get<std::string>();
  r.n = j.at("n").get<int>();
  r.dofs = j.at("dofs").get<int>();
  r.elements = j.at("elements").get<int>();
  r.h = j.at("h").get<double>();
  r.H = j.at("H").get<double>();
  r.s_x = j.at("s_x").get<int>();
  r.s_y = j.at("s_y").get<int>();
  r.nsub = j.at("nsub").get<int>();
  r.phi = j.at("phi").get<double>();
  r.method = j.at("method").get<std::string>();
  r.backend = j.at("backend").get<std::string>();
  r.augment = j.at("augment").get<bool>();
  r.iters_minus = j.at("iters_minus").get<int>();
  r.iters_plus = j.at("iters_plus").get<int>();
  r.outer_iters = j.at("outer_iters").get<int>();
  r.converged = j.at("converged").get<bool>();
  r.relative_residual = j.at("relative_residual").get<double>();
  r.constraint_violation = j.at("constraint_violation").get<double>();
  r.target_mismatch = j.at("target_mismatch").get<double>();
  r.control_norm = j.at("control_norm").get<double>();
  r.objective = j.at("objective").get<double>();
  r.imag_leak = j.at("imag_leak").get<double>();
  r.cross_agreement = j.at("cross_agreement").get<double>();
  r.error = j.at("error").get<std::string>();
  r.build_seconds = j.at("build_seconds").get<double>();
  r.per_solve_seconds = j.at("per_solve_seconds").get<double>();
  r.total_seconds = j.at("total_seconds").get<double>();
  return r;
}

}  // namespace

std::string rows_to_json(const std::vector<ResultRow>& rows) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["config_hash"] = rows.empty() ? "" : rows.front().config_hash;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back(row_to_json_object(r));
  j["rows"] = std::move(arr);
  return j.dump(2);
}

std::vector<ResultRow> parse_rows_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  std::vector<ResultRow> rows;
  for (const auto& item : j.at("rows")) rows.push_back(row_from_json_object(item));
  return rows;
}

std::vector<ResultRow> parse_rows_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<ResultRow> rows;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // column header
      continue;
    }
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    // allow a trailing empty error field to be swallowed by getline
    const auto cols = result_columns();
    while (f.size() < cols.size()) f.push_back("");
    if (f.size() != cols.size())
      throw NumericalError("parse_rows_csv: column count mismatch in line: " + line);
    ResultRow r;
    int i = 0;
    r.schema_version = std::stoi(f[i++]);
    r.experiment = f[i++];
    r.config_hash = f[i++];
    r.physics = f[i++];
    r.n = std::stoi(f[i++]);
    r.dofs = std::stoi(f[i++]);
    r.elements = std::stoi(f[i++]);
    r.h = std::stod(f[i++]);
    r.H = std::stod(f[i++]);
    r.s_x = std::stoi(f[i++]);
    r.s_y = std::stoi(f[i++]);
    r.nsub = std::stoi(f[i++]);
    r.phi = std::stod(f[i++]);
    r.method = f[i++];
    r.backend = f[i++];
    r.augment = f[i++] == "1";
    r.iters_minus = std::stoi(f[i++]);
    r.iters_plus = std::stoi(f[i++]);
    r.outer_iters = std::stoi(f[i++]);
    r.converged = f[i++] == "1";
    r.relative_residual = std::stod(f[i++]);
    r.constraint_violation = std::stod(f[i++]);
    r.target_mismatch = std::stod(f[i++]);
    r.control_norm = std::stod(f[i++]);
    r.objective = std::stod(f[i++]);
    r.imag_leak = std::stod(f[i++]);
    r.cross_agreement = std::stod(f[i++]);
    r.error = f[i++];
    r.build_seconds = std::stod(f[i++]);
    r.per_solve_seconds = std::stod(f[i++]);
    r.total_seconds = std::stod(f[i++]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> parse_rows_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw NumericalError("parse_rows_file: cannot open '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  const std::string text = buf.str();
  for (char c : text) {
    if (c == ' ' || c == '\n' || c == '\t') continue;
    if (c == '{') return parse_rows_json(text);
    break;
  }
  return parse_rows_csv(text);
}

}  // namespace pdeopt
