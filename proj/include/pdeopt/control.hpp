#pragma once

#include <memory>

#include "pdeopt/fem.hpp"
#include "pdeopt/feti.hpp"
#include "pdeopt/krylov.hpp"
#include "pdeopt/mesh.hpp"
#include "pdeopt/sparse_solvers.hpp"

namespace pdeopt {

/// Discrete distributed control problem
///   min 1/2 ||y - ybar||_V^2 + phi/2 ||u||_V^2   s.t.  K y + Kc y_c = V u.
struct ControlProblem {
  StructuredMesh mesh;
  Physics physics;
  AssembledOperators ops;
  Vec target_state;     // ybar over the free DOFs
  Vec boundary_values;  // y_c over the constrained DOFs
  double phi = 0.0;

  int n() const { return ops.n(); }
  int m() const { return ops.m(); }
  void validate() const;

  /// K ybar + Kc y_c, the rhs of the dual Schur system.
  Vec schur_rhs() const;
  /// (V ybar, 0, -Kc y_c).
  Vec kkt_rhs() const;
};

/// Thermal problem on the unit square: full-boundary Dirichlet values equal
/// to the target trace.
ControlProblem make_thermal_problem(int n, double phi);

/// Plane-strain cantilever on [0,3]x[0,1] (aspect 3:1), clamped at x = 0;
/// n elements across the thickness. The target displacement comes from a
/// forward solve under a bottom-edge pressure load.
ControlProblem make_cantilever_problem(int n, double phi, double pressure = 100e3);

/// The symmetric indefinite optimality system, applied matrix-free.
/// Non-owning: the problem must outlive the system.
struct KktSystem {
  const ControlProblem* problem = nullptr;
  Vec rhs;

  Eigen::Index dim() const { return 3 * static_cast<Eigen::Index>(problem->n()); }
  void apply(const Vec& x, Vec& y) const;
  LinearOperator<double> as_operator() const;
  Mat to_dense() const;
};

KktSystem assemble_kkt(const ControlProblem& problem);

/// Matrix-free negative Schur complement S = K V^{-1} K + V / phi with a
/// cached Cholesky of V.
class SchurOperator {
 public:
  explicit SchurOperator(const ControlProblem& problem);
  void apply(const Vec& v, Vec& out) const;
  Vec apply(const Vec& v) const;
  const SpdCholesky& v_cholesky() const { return vchol_; }

 private:
  const ControlProblem& problem_;
  SpdCholesky vchol_;
};

Vec apply_schur(const ControlProblem& problem, const Vec& v);

/// The exact complex split S = (K + cV) V^{-1} (K - cV), c = 1/(i sqrt(phi)).
struct SchurFactors {
  Complex c;
  CsrMatrix<Complex> plus;   // K + cV
  CsrMatrix<Complex> minus;  // K - cV
};

SchurFactors build_complex_factors(const ControlProblem& problem);

struct SolutionTriple {
  Vec y, u, lambda;
  double imag_leak = 0.0;  // max |Im| discarded when realifying the multiplier
};

struct DiagnosticsReport {
  double constraint_violation = 0.0;  // ||K y + Kc y_c - V u|| / ||K y||
  double target_mismatch = 0.0;       // ||y - ybar||_V / ||ybar||_V
  double control_norm = 0.0;          // ||u||_V
  double objective = 0.0;
  bool violation_defined = true;  // false when ||K y|| == 0
};

DiagnosticsReport diagnostics(const ControlProblem& problem, const SolutionTriple& solution);

/// How the complex-symmetric factor systems are solved.
enum class FactorMethod { DirectLu, Gmres, FetiDp };

struct FactorSolverConfig {
  FactorMethod method = FactorMethod::DirectLu;
  double tol = 1e-12;
  int max_iter = 5000;
  FetiConfig feti;  // used when method == FetiDp
};

/// Reusable solver bound to one factor K + vcoeff*V.
class ComplexFactorSolver {
 public:
  ComplexFactorSolver(const ControlProblem& problem, Complex vcoeff,
                      const FactorSolverConfig& config);
  ~ComplexFactorSolver();
  ComplexFactorSolver(ComplexFactorSolver&&) noexcept;

  std::pair<CVec, SolveStats> solve(const CVec& rhs) const;
  double setup_seconds() const { return setup_seconds_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  double setup_seconds_ = 0.0;
};

/// Reusable SPD solver bound to K + a*V (a >= 0), for the Pearson-Wathen
/// factor and plain stiffness solves.
class RealFactorSolver {
 public:
  RealFactorSolver(const ControlProblem& problem, double vcoeff, const FactorSolverConfig& config);
  ~RealFactorSolver();
  RealFactorSolver(RealFactorSolver&&) noexcept;

  std::pair<Vec, SolveStats> solve(const Vec& rhs) const;
  double setup_seconds() const { return setup_seconds_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  double setup_seconds_ = 0.0;
};

struct RangeSpaceResult {
  SolutionTriple solution;
  SolveStats plus_stats;   // solve with K + cV
  SolveStats minus_stats;  // solve with K - cV
  bool converged = true;
  bool imag_leak_warning = false;
  double factor_setup_seconds = 0.0;
};

/// Factored dual solve (K + cV) a = K ybar + Kc y_c, (K - cV) t = V a,
/// lambda = Re t, then y = ybar - V^{-1} K lambda and u = lambda / phi.
RangeSpaceResult solve_range_space(const ControlProblem& problem,
                                   const FactorSolverConfig& config = {});

/// Pearson-Wathen application x = (K + V/sqrt(phi))^{-1} V (K + V/sqrt(phi))^{-1} rhs.
Vec solve_sp(const ControlProblem& problem, const Vec& rhs, const FactorSolverConfig& config = {});

enum class SchurBackend { ExactSc, ApproxSp };

/// Block-diagonal preconditioner blockdiag(V, phi V, S_hat)^{-1} where S_hat
/// is served by the exact complex factorization or the Pearson-Wathen
/// approximation.
class PmgwPreconditioner {
 public:
  PmgwPreconditioner(const ControlProblem& problem, SchurBackend backend,
                     const FactorSolverConfig& inner = {});
  ~PmgwPreconditioner();

  Vec apply(const Vec& residual) const;
  double last_imag_leak() const { return last_imag_leak_; }
  double setup_seconds() const { return setup_seconds_; }
  SolveStats last_inner_stats() const { return last_inner_stats_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  const ControlProblem& problem_;
  SchurBackend backend_;
  mutable double last_imag_leak_ = 0.0;
  mutable SolveStats last_inner_stats_;
  double setup_seconds_ = 0.0;
};

Vec apply_pmgw(const ControlProblem& problem, SchurBackend backend, const Vec& residual,
               const FactorSolverConfig& inner = {});

enum class FullSpacePrecond { None, PmgwSp, PmgwSc };
enum class OuterSolver { Minres, Gmres };

struct FullSpaceOptions {
  FullSpacePrecond precond = FullSpacePrecond::None;
  OuterSolver outer = OuterSolver::Minres;
  double tol = 1e-10;
  int max_iter = 5000;
  FactorSolverConfig inner;  // backend factor solves inside the preconditioner
  // Residual-correction sweeps after the Krylov solve (standard precision);
  // pushes the block-wise residuals below the norm-wise stopping level.
  int refine_sweeps = 0;
};

struct FullSpaceResult {
  SolutionTriple solution;
  SolveStats stats;  // outer iterations
  double precond_setup_seconds = 0.0;
};

FullSpaceResult solve_full_space(const ControlProblem& problem, const FullSpaceOptions& options);

}  // namespace pdeopt
