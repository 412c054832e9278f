#include "pdeopt/control.hpp"

#include <cmath>

namespace pdeopt {

void ControlProblem::validate() const {
  if (!(phi > 0.0)) throw ContractError("ControlProblem: phi must be positive");
  if (ops.K.n_rows != ops.V.n_rows || ops.K.n_rows != ops.Kc.n_rows)
    throw ContractError("ControlProblem: operator dimensions disagree");
  if (target_state.size() != n()) throw ContractError("ControlProblem: target length != n");
  if (boundary_values.size() != m()) throw ContractError("ControlProblem: boundary length != m");
}

Vec ControlProblem::schur_rhs() const { return ops.K * target_state + ops.Kc * boundary_values; }

Vec ControlProblem::kkt_rhs() const {
  Vec rhs = Vec::Zero(3 * n());
  rhs.head(n()) = ops.V * target_state;
  rhs.tail(n()) = -(ops.Kc * boundary_values);
  return rhs;
}

ControlProblem make_thermal_problem(int n, double phi) {
  ControlProblem p;
  p.mesh = build_unit_square_mesh(n);
  p.physics = Physics::heat();
  p.ops = assemble_operators(p.mesh, p.physics);
  p.target_state = target_state_thermal(p.mesh, p.ops);
  p.boundary_values = dirichlet_values_thermal(p.mesh, p.ops);
  p.phi = phi;
  p.validate();
  return p;
}

ControlProblem make_cantilever_problem(int n, double phi, double pressure) {
  ControlProblem p;
  p.mesh = build_rectangle_mesh(3 * n, n, 3.0, 1.0);
  p.physics = Physics::cantilever_rubber();
  p.ops = assemble_operators(p.mesh, p.physics);
  p.target_state = forward_solve_elastic_target(p.mesh, p.physics, p.ops, pressure);
  p.boundary_values = Vec::Zero(p.ops.m());  // clamped edge
  p.phi = phi;
  p.validate();
  return p;
}

void KktSystem::apply(const Vec& x, Vec& y) const {
  const auto& ops = problem->ops;
  const int n = problem->n();
  if (x.size() != 3 * n) throw ContractError("KktSystem::apply: dimension mismatch");
  const auto xy = x.head(n);
  const auto xu = x.segment(n, n);
  const auto xl = x.tail(n);
  y.resize(3 * n);
  // [V 0 K; 0 phi V -V; K -V 0]
  y.head(n) = ops.V * Vec(xy) + ops.K * Vec(xl);
  y.segment(n, n) = problem->phi * (ops.V * Vec(xu)) - ops.V * Vec(xl);
  y.tail(n) = ops.K * Vec(xy) - ops.V * Vec(xu);
}

LinearOperator<double> KktSystem::as_operator() const {
  LinearOperator<double> op;
  op.n = dim();
  op.apply = [this](const Vec& x, Vec& y) { apply(x, y); };
  return op;
}

Mat KktSystem::to_dense() const {
  const int n = problem->n();
  const Mat k = problem->ops.K.to_dense();
  const Mat v = problem->ops.V.to_dense();
  Mat a = Mat::Zero(3 * n, 3 * n);
  a.block(0, 0, n, n) = v;
  a.block(0, 2 * n, n, n) = k;
  a.block(n, n, n, n) = problem->phi * v;
  a.block(n, 2 * n, n, n) = -v;
  a.block(2 * n, 0, n, n) = k;
  a.block(2 * n, n, n, n) = -v;
  return a;
}

KktSystem assemble_kkt(const ControlProblem& problem) {
  problem.validate();
  KktSystem sys;
  sys.problem = &problem;
  sys.rhs = problem.kkt_rhs();
  return sys;
}

SchurOperator::SchurOperator(const ControlProblem& problem)
    : problem_(problem), vchol_(problem.ops.V) {
  problem.validate();
}

void SchurOperator::apply(const Vec& v, Vec& out) const {
  const auto& ops = problem_.ops;
  const Vec kv = ops.K * v;
  const Vec vinv = vchol_.solve(kv);
  out = ops.K * vinv + (ops.V * v) / problem_.phi;
}

Vec SchurOperator::apply(const Vec& v) const {
  Vec out;
  apply(v, out);
  return out;
}

Vec apply_schur(const ControlProblem& problem, const Vec& v) {
  return SchurOperator(problem).apply(v);
}

SchurFactors build_complex_factors(const ControlProblem& problem) {
  if (!(problem.phi > 0.0)) throw ContractError("build_complex_factors: phi must be positive");
  SchurFactors f;
  f.c = Complex(0.0, -1.0 / std::sqrt(problem.phi));  // 1/(i sqrt(phi))
  f.plus = linear_combination<Complex>(Complex(1.0), problem.ops.K, f.c, problem.ops.V);
  f.minus = linear_combination<Complex>(Complex(1.0), problem.ops.K, -f.c, problem.ops.V);
  return f;
}

DiagnosticsReport diagnostics(const ControlProblem& problem, const SolutionTriple& solution) {
  const auto& ops = problem.ops;
  DiagnosticsReport rep;
  const Vec ky = ops.K * solution.y;
  const Vec residual = ky + ops.Kc * problem.boundary_values - ops.V * solution.u;
  const double kynorm = ky.norm();
  if (kynorm == 0.0) {
    rep.violation_defined = false;
    rep.constraint_violation = 0.0;
  } else {
    rep.constraint_violation = residual.norm() / kynorm;
  }
  const Vec dy = solution.y - problem.target_state;
  const double dy_v = std::sqrt(dy.dot(ops.V * dy));
  const double ybar_v = std::sqrt(problem.target_state.dot(ops.V * problem.target_state));
  rep.target_mismatch = ybar_v > 0.0 ? dy_v / ybar_v : dy_v;
  rep.control_norm = std::sqrt(solution.u.dot(ops.V * solution.u));
  rep.objective = 0.5 * dy_v * dy_v + 0.5 * problem.phi * rep.control_norm * rep.control_norm;
  return rep;
}

// ---------------------------------------------------------------------------
// Factor solvers

struct ComplexFactorSolver::Impl {
  const ControlProblem& problem;
  Complex vcoeff;
  FactorSolverConfig config;
  CsrMatrix<Complex> matrix;
  std::unique_ptr<SparseLuSolver<Complex>> lu;
  std::shared_ptr<const FetiPartition> partition;
  std::unique_ptr<ComplexFetiSolver> feti;

  Impl(const ControlProblem& p, Complex c, const FactorSolverConfig& cfg)
      : problem(p), vcoeff(c), config(cfg) {
    switch (config.method) {
      case FactorMethod::DirectLu:
        matrix = linear_combination<Complex>(Complex(1.0), p.ops.K, c, p.ops.V);
        lu = std::make_unique<SparseLuSolver<Complex>>(matrix);
        break;
      case FactorMethod::Gmres:
        matrix = linear_combination<Complex>(Complex(1.0), p.ops.K, c, p.ops.V);
        break;
      case FactorMethod::FetiDp: {
        partition = std::make_shared<const FetiPartition>(
            partition_structured(p.mesh, p.physics, p.ops, config.feti.s_x, config.feti.s_y));
        OperatorSpec spec;
        spec.stiffness_coeff = 1.0;
        spec.mass_coeff = c;
        FetiConfig fc = config.feti;
        fc.tol = config.tol < 1e-12 ? config.feti.tol : config.tol;
        feti = std::make_unique<ComplexFetiSolver>(p.mesh, p.physics, p.ops, partition, spec, fc);
        break;
      }
    }
  }

  std::pair<CVec, SolveStats> solve(const CVec& rhs) const {
    switch (config.method) {
      case FactorMethod::DirectLu: {
        detail::WallTimer timer;
        SolveStats st;
        CVec x = lu->solve(rhs);
        const double bnorm = rhs.norm();
        st.relative_residual = bnorm == 0.0 ? 0.0 : (rhs - matrix * x).norm() / bnorm;
        st.converged = true;
        st.wall_time = timer.seconds();
        return {std::move(x), st};
      }
      case FactorMethod::Gmres: {
        auto op = make_operator(matrix);
        GmresOptions opt;
        opt.tol = config.tol;
        opt.max_iter = config.max_iter;
        opt.restart = std::max(1, config.max_iter);
        return gmres(op, rhs, opt);
      }
      case FactorMethod::FetiDp: {
        auto [x, fstats] = feti->solve(rhs);
        return {std::move(x), fstats.dual};
      }
    }
    throw NumericalError("ComplexFactorSolver: unreachable");
  }
};

ComplexFactorSolver::ComplexFactorSolver(const ControlProblem& problem, Complex vcoeff,
                                         const FactorSolverConfig& config) {
  detail::WallTimer timer;
  impl_ = std::make_unique<Impl>(problem, vcoeff, config);
  setup_seconds_ = timer.seconds();
}
ComplexFactorSolver::~ComplexFactorSolver() = default;
ComplexFactorSolver::ComplexFactorSolver(ComplexFactorSolver&&) noexcept = default;

std::pair<CVec, SolveStats> ComplexFactorSolver::solve(const CVec& rhs) const {
  return impl_->solve(rhs);
}

struct RealFactorSolver::Impl {
  const ControlProblem& problem;
  FactorSolverConfig config;
  CsrMatrix<double> matrix;
  std::unique_ptr<SpdCholesky> chol;
  std::shared_ptr<const FetiPartition> partition;
  std::unique_ptr<RealFetiSolver> feti;

  Impl(const ControlProblem& p, double vcoeff, const FactorSolverConfig& cfg)
      : problem(p), config(cfg) {
    switch (config.method) {
      case FactorMethod::DirectLu:
      case FactorMethod::Gmres:
        matrix = linear_combination<double>(1.0, p.ops.K, vcoeff, p.ops.V);
        if (config.method == FactorMethod::DirectLu)
          chol = std::make_unique<SpdCholesky>(matrix);
        break;
      case FactorMethod::FetiDp: {
        partition = std::make_shared<const FetiPartition>(
            partition_structured(p.mesh, p.physics, p.ops, config.feti.s_x, config.feti.s_y));
        OperatorSpec spec;
        spec.stiffness_coeff = 1.0;
        spec.mass_coeff = vcoeff;
        FetiConfig fc = config.feti;
        fc.tol = config.tol < 1e-12 ? config.feti.tol : config.tol;
        feti = std::make_unique<RealFetiSolver>(p.mesh, p.physics, p.ops, partition, spec, fc);
        break;
      }
    }
  }

  std::pair<Vec, SolveStats> solve(const Vec& rhs) const {
    switch (config.method) {
      case FactorMethod::DirectLu: {
        detail::WallTimer timer;
        SolveStats st;
        Vec x = chol->solve(rhs);
        const double bnorm = rhs.norm();
        st.relative_residual = bnorm == 0.0 ? 0.0 : (rhs - matrix * x).norm() / bnorm;
        st.converged = true;
        st.wall_time = timer.seconds();
        return {std::move(x), st};
      }
      case FactorMethod::Gmres: {
        // CG is the natural Krylov process for this SPD factor.
        auto op = make_operator(matrix);
        CgOptions opt;
        opt.tol = config.tol;
        opt.max_iter = config.max_iter;
        return cg(op, rhs, opt);
      }
      case FactorMethod::FetiDp: {
        auto [x, fstats] = feti->solve(rhs);
        return {std::move(x), fstats.dual};
      }
    }
    throw NumericalError("RealFactorSolver: unreachable");
  }
};

RealFactorSolver::RealFactorSolver(const ControlProblem& problem, double vcoeff,
                                   const FactorSolverConfig& config) {
  detail::WallTimer timer;
  impl_ = std::make_unique<Impl>(problem, vcoeff, config);
  setup_seconds_ = timer.seconds();
}
RealFactorSolver::~RealFactorSolver() = default;
RealFactorSolver::RealFactorSolver(RealFactorSolver&&) noexcept = default;

std::pair<Vec, SolveStats> RealFactorSolver::solve(const Vec& rhs) const {
  return impl_->solve(rhs);
}

// ---------------------------------------------------------------------------
// Range-space method

RangeSpaceResult solve_range_space(const ControlProblem& problem,
                                   const FactorSolverConfig& config) {
  problem.validate();
  const SchurFactors factors = build_complex_factors(problem);
  RangeSpaceResult out;

  ComplexFactorSolver plus(problem, factors.c, config);
  ComplexFactorSolver minus(problem, -factors.c, config);
  out.factor_setup_seconds = plus.setup_seconds() + minus.setup_seconds();

  const Vec rhs = problem.schur_rhs();
  CVec crhs = rhs.cast<Complex>();

  auto [a, plus_stats] = plus.solve(crhs);
  out.plus_stats = plus_stats;

  CVec va(a.size());
  problem.ops.V.apply(a, va);

  auto [t, minus_stats] = minus.solve(va);
  out.minus_stats = minus_stats;

  SolutionTriple sol;
  sol.lambda = t.real();
  sol.imag_leak = t.size() > 0 ? t.imag().cwiseAbs().maxCoeff() : 0.0;

  SpdCholesky vchol(problem.ops.V);
  sol.y = problem.target_state - vchol.solve(problem.ops.K * sol.lambda);
  sol.u = sol.lambda / problem.phi;
  out.solution = std::move(sol);

  out.converged = plus_stats.converged && minus_stats.converged;
  const double lmax = out.solution.lambda.size() > 0
                          ? out.solution.lambda.cwiseAbs().maxCoeff()
                          : 0.0;
  out.imag_leak_warning = out.solution.imag_leak > 1e-6 * std::max(lmax, 1e-300);
  return out;
}

Vec solve_sp(const ControlProblem& problem, const Vec& rhs, const FactorSolverConfig& config) {
  if (!(problem.phi > 0.0)) throw ContractError("solve_sp: phi must be positive");
  RealFactorSolver factor(problem, 1.0 / std::sqrt(problem.phi), config);
  auto [t1, st1] = factor.solve(rhs);
  if (!st1.converged) throw NumericalError("solve_sp: inner factor solve failed");
  const Vec vt = problem.ops.V * t1;
  auto [x, st2] = factor.solve(vt);
  if (!st2.converged) throw NumericalError("solve_sp: inner factor solve failed");
  return x;
}

// ---------------------------------------------------------------------------
// Murphy block preconditioner and the full-space method

struct PmgwPreconditioner::Impl {
  SpdCholesky vchol;
  std::unique_ptr<ComplexFactorSolver> plus, minus;  // ExactSc
  std::unique_ptr<RealFactorSolver> sp_factor;       // ApproxSp

  explicit Impl(const ControlProblem& p) : vchol(p.ops.V) {}
};

PmgwPreconditioner::PmgwPreconditioner(const ControlProblem& problem, SchurBackend backend,
                                       const FactorSolverConfig& inner)
    : problem_(problem), backend_(backend) {
  detail::WallTimer timer;
  problem.validate();
  impl_ = std::make_unique<Impl>(problem);
  const Complex c(0.0, -1.0 / std::sqrt(problem.phi));
  if (backend == SchurBackend::ExactSc) {
    impl_->plus = std::make_unique<ComplexFactorSolver>(problem, c, inner);
    impl_->minus = std::make_unique<ComplexFactorSolver>(problem, -c, inner);
  } else {
    impl_->sp_factor =
        std::make_unique<RealFactorSolver>(problem, 1.0 / std::sqrt(problem.phi), inner);
  }
  setup_seconds_ = timer.seconds();
}
PmgwPreconditioner::~PmgwPreconditioner() = default;

Vec PmgwPreconditioner::apply(const Vec& residual) const {
  const int n = problem_.n();
  if (residual.size() != 3 * n) throw ContractError("PmgwPreconditioner: dimension mismatch");
  Vec out(3 * n);
  out.head(n) = impl_->vchol.solve(Vec(residual.head(n)));
  out.segment(n, n) = impl_->vchol.solve(Vec(residual.segment(n, n))) / problem_.phi;

  const Vec r3 = residual.tail(n);
  if (backend_ == SchurBackend::ExactSc) {
    // S^{-1} = (K - cV)^{-1} V (K + cV)^{-1}
    auto [a, st1] = impl_->plus->solve(r3.cast<Complex>());
    CVec va(a.size());
    problem_.ops.V.apply(a, va);
    auto [t, st2] = impl_->minus->solve(va);
    last_imag_leak_ = t.size() > 0 ? t.imag().cwiseAbs().maxCoeff() : 0.0;
    SolveStats agg;
    agg.iterations = st1.iterations + st2.iterations;
    agg.converged = st1.converged && st2.converged;
    agg.relative_residual = std::max(st1.relative_residual, st2.relative_residual);
    agg.wall_time = st1.wall_time + st2.wall_time;
    last_inner_stats_ = agg;
    out.tail(n) = t.real();
  } else {
    auto [t1, st1] = impl_->sp_factor->solve(r3);
    const Vec vt = problem_.ops.V * t1;
    auto [x, st2] = impl_->sp_factor->solve(vt);
    SolveStats agg;
    agg.iterations = st1.iterations + st2.iterations;
    agg.converged = st1.converged && st2.converged;
    agg.relative_residual = std::max(st1.relative_residual, st2.relative_residual);
    agg.wall_time = st1.wall_time + st2.wall_time;
    last_inner_stats_ = agg;
    out.tail(n) = x;
  }
  return out;
}

Vec apply_pmgw(const ControlProblem& problem, SchurBackend backend, const Vec& residual,
               const FactorSolverConfig& inner) {
  return PmgwPreconditioner(problem, backend, inner).apply(residual);
}

FullSpaceResult solve_full_space(const ControlProblem& problem, const FullSpaceOptions& options) {
  problem.validate();
  if (options.precond == FullSpacePrecond::PmgwSc && options.outer == OuterSolver::Minres)
    throw ContractError(
        "solve_full_space: the complex-factor backend preconditioner requires GMRES");

  const KktSystem sys = assemble_kkt(problem);
  LinearOperator<double> op = sys.as_operator();

  std::unique_ptr<PmgwPreconditioner> precond;
  FullSpaceResult out;
  if (options.precond != FullSpacePrecond::None) {
    const SchurBackend backend = options.precond == FullSpacePrecond::PmgwSc
                                     ? SchurBackend::ExactSc
                                     : SchurBackend::ApproxSp;
    precond = std::make_unique<PmgwPreconditioner>(problem, backend, options.inner);
    op.precondition = [&precond](const Vec& r, Vec& z) { z = precond->apply(r); };
    out.precond_setup_seconds = precond->setup_seconds();
  }

  auto krylov_solve = [&](const Vec& rhs) -> std::pair<Vec, SolveStats> {
    if (options.outer == OuterSolver::Minres) {
      MinresOptions mopt;
      mopt.tol = options.tol;
      mopt.max_iter = options.max_iter;
      mopt.check_symmetry = false;  // the KKT operator is symmetric by construction
      return minres(op, rhs, mopt);
    }
    GmresOptions gopt;
    gopt.tol = options.tol;
    gopt.max_iter = options.max_iter;
    gopt.restart = std::max(1, options.max_iter);
    // Iterative backend solves make the preconditioner a varying operator;
    // flexible storage keeps the recurrence consistent.
    gopt.flexible = precond && options.inner.method != FactorMethod::DirectLu;
    return gmres(op, rhs, gopt);
  };

  auto [x0, stats] = krylov_solve(sys.rhs);
  Vec x = std::move(x0);
  for (int sweep = 0; sweep < options.refine_sweeps; ++sweep) {
    Vec ax(x.size());
    op.apply(x, ax);
    const Vec r = sys.rhs - ax;
    auto [dx, rst] = krylov_solve(r);
    x += dx;
    stats.iterations += rst.iterations;
    op.apply(x, ax);
    stats.relative_residual = (sys.rhs - ax).norm() / sys.rhs.norm();
  }

  const int n = problem.n();
  out.solution.y = x.head(n);
  out.solution.u = x.segment(n, n);
  out.solution.lambda = x.tail(n);
  out.solution.imag_leak = precond ? precond->last_imag_leak() : 0.0;
  out.stats = stats;
  return out;
}

}  // namespace pdeopt
