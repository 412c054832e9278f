#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pdeopt/control.hpp"

namespace pdeopt {

enum class ExperimentKind { PhiSweep, Scalability, PrecondCompare, AccuracyCliff };

std::string experiment_kind_name(ExperimentKind kind);
ExperimentKind experiment_kind_from_name(const std::string& name);

/// One experiment run: mesh/partition geometry, the regularization sweep and
/// the solver tolerances. Serializable to/from JSON; the canonical JSON
/// string is hashed into every result row.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::PhiSweep;
  PhysicsKind physics = PhysicsKind::Heat;
  int n = 64;  // elements per axis (per unit thickness for the cantilever)
  int s_x = 8, s_y = 8;
  std::vector<double> phi;  // strictly positive, sorted descending
  double feti_tol = 1e-10;
  double outer_tol = 1e-10;
  double inner_tol = 1e-9;
  bool augment = true;
  bool deterministic = true;
  int threads = 1;
  std::uint64_t seed = 0;
  std::vector<int> mesh_sizes;  // scalability: element counts per axis
  int ratio = 8;                // scalability: fixed H/h
  double pressure = 100e3;      // cantilever target load, Pa

  static ExperimentConfig defaults_for(ExperimentKind kind);
  static ExperimentConfig from_json(const std::string& text);
  std::string to_json() const;
  std::string hash() const;  // FNV-1a 64 over the canonical JSON, hex
  void validate() const;
};

/// Flattened per-solve record mirroring the paper-style tables; schema_version
/// guards the column layout.
struct ResultRow {
  int schema_version = 1;
  std::string experiment;
  std::string config_hash;
  std::string physics;
  int n = 0;
  int dofs = 0;
  int elements = 0;
  double h = 0.0;
  double H = 0.0;
  int s_x = 0, s_y = 0, nsub = 0;
  double phi = 0.0;
  std::string method;   // range_space | full_space | factor_solve
  std::string backend;  // feti | feti_aug | direct | sp | sc | none
  bool augment = false;
  int iters_minus = 0;
  int iters_plus = 0;
  int outer_iters = 0;
  bool converged = false;
  double relative_residual = 0.0;
  double constraint_violation = 0.0;
  double target_mismatch = 0.0;
  double control_norm = 0.0;
  double objective = 0.0;
  double imag_leak = 0.0;
  double cross_agreement = 0.0;  // precond-compare: relative gap between backends
  std::string error;             // per-row failure note, empty on success
  // wall-time columns (excluded from determinism comparisons)
  double build_seconds = 0.0;
  double per_solve_seconds = 0.0;
  double total_seconds = 0.0;

  /// Identity of the row within one experiment, independent of outputs.
  std::string key() const;
};

std::vector<std::string> result_columns();            // stable CSV column order
std::vector<std::string> wall_time_columns();         // excluded from comparisons
bool rows_equal_ignoring_wall_time(const ResultRow& a, const ResultRow& b);

// Each driver accepts an optional cache of previously computed rows (keyed
// by ResultRow::key); cache hits are copied through without re-solving.
using RowCache = std::map<std::string, ResultRow>;

std::vector<ResultRow> run_phi_sweep(const ExperimentConfig& config,
                                     const RowCache* cached = nullptr);
std::vector<ResultRow> run_scalability(const ExperimentConfig& config,
                                       const RowCache* cached = nullptr);
std::vector<ResultRow> run_precond_compare(const ExperimentConfig& config,
                                           const RowCache* cached = nullptr);
std::vector<ResultRow> run_accuracy_cliff(const ExperimentConfig& config,
                                          const RowCache* cached = nullptr);

/// Dispatches on config.kind; when out_path already holds rows for the same
/// config hash, those rows are kept and their solves skipped.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config,
                                      const std::string& out_path = "");

void emit_rows(const std::vector<ResultRow>& rows, const std::string& format,
               const std::string& path, bool allow_empty = false);
std::string rows_to_csv(const std::vector<ResultRow>& rows);
std::string rows_to_json(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_rows_csv(const std::string& text);
std::vector<ResultRow> parse_rows_json(const std::string& text);
std::vector<ResultRow> parse_rows_file(const std::string& path);

}  // namespace pdeopt
