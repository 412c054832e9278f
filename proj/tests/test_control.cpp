#include <doctest.h>

#include "pdeopt/control.hpp"
#include "pdeopt/dense.hpp"
#include "test_helpers.hpp"

using namespace pdeopt;
using namespace pdeopt::testing;

namespace {

// Hand-assembled scalar problem for closed-form checks; the mesh is a
// placeholder (only FETI-backed solves touch it).
ControlProblem make_toy_problem(double k, double v, double phi, double ybar) {
  ControlProblem p;
  p.mesh = build_unit_square_mesh(2);
  p.physics = Physics::heat();
  p.ops.K = CsrMatrix<double>::from_triplets(1, 1, {{0, 0, k}}, true);
  p.ops.V = CsrMatrix<double>::from_triplets(1, 1, {{0, 0, v}}, true);
  p.ops.Kc = CsrMatrix<double>::from_triplets(1, 0, {}, false);
  p.ops.free_dof_map = {0};
  p.ops.free_dofs = {0};
  p.target_state = Vec::Constant(1, ybar);
  p.boundary_values = Vec(0);
  p.phi = phi;
  return p;
}

}  // namespace

TEST_CASE("kkt system on the 1x1 toy") {
  const auto p = make_toy_problem(1.0, 1.0, 1.0, 1.0);
  const auto sys = assemble_kkt(p);
  const Mat a = sys.to_dense();
  Mat expected(3, 3);
  expected << 1, 0, 1, 0, 1, -1, 1, -1, 0;
  CHECK((a - expected).norm() == 0.0);
  CHECK(sys.rhs[0] == doctest::Approx(1.0));
  CHECK(sys.rhs[1] == 0.0);
  CHECK(sys.rhs[2] == 0.0);
}

TEST_CASE("kkt operator is symmetric under random probes") {
  const auto p = make_thermal_problem(4, 2e-3);
  const auto sys = assemble_kkt(p);
  auto rng = make_rng(5);
  const Vec x = random_vector(3 * p.n(), rng);
  const Vec z = random_vector(3 * p.n(), rng);
  Vec ax(3 * p.n()), az(3 * p.n());
  sys.apply(x, ax);
  sys.apply(z, az);
  CHECK(std::abs(x.dot(az) - z.dot(ax)) <= 1e-12 * (x.norm() * az.norm() + z.norm() * ax.norm()));
}

TEST_CASE("kkt matrix is indefinite on the n=4 thermal problem") {
  const auto p = make_thermal_problem(4, 2e-3);
  const auto sys = assemble_kkt(p);
  const Vec ev = dense_eigenvalues(sys.to_dense());
  CHECK(ev[0] < 0.0);
  CHECK(ev[ev.size() - 1] > 0.0);
}

TEST_CASE("kkt matrix-free apply matches the dense block matrix") {
  const auto p = make_thermal_problem(4, 1e-4);
  const auto sys = assemble_kkt(p);
  const Mat a = sys.to_dense();
  auto rng = make_rng(9);
  const Vec x = random_vector(3 * p.n(), rng);
  Vec y(3 * p.n());
  sys.apply(x, y);
  CHECK((y - Vec(a * x)).norm() <= 1e-13 * y.norm());
}

TEST_CASE("schur apply on the 1x1 toy gives K V^{-1} K + V/phi") {
  const auto p = make_toy_problem(2.0, 1.0, 1.0, 1.0);
  const Vec v = Vec::Ones(1);
  CHECK(apply_schur(p, v)[0] == doctest::Approx(5.0));
}

TEST_CASE("schur apply matches the dense oracle and is linear") {
  const auto p = make_thermal_problem(4, 2e-5);
  const SchurOperator s(p);
  const Mat sd = dense_schur_oracle(p);
  auto rng = make_rng(13);
  const Vec v = random_vector(p.n(), rng);
  const Vec sv = s.apply(v);
  CHECK((sv - Vec(sd * v)).norm() <= 1e-11 * sv.norm());

  const Vec w = random_vector(p.n(), rng);
  const Vec lin = s.apply(Vec(2.0 * v - 3.0 * w));
  CHECK((lin - (2.0 * s.apply(v) - 3.0 * s.apply(w))).norm() <= 1e-11 * (1.0 + lin.norm()));
}

TEST_CASE("complex factors on the 1x1 toy") {
  const auto p = make_toy_problem(2.0, 1.0, 1.0, 1.0);
  const auto f = build_complex_factors(p);
  CHECK(std::abs(f.c - Complex(0.0, -1.0)) <= 1e-15);
  CHECK(std::abs(f.plus.coeff(0, 0) - Complex(2.0, -1.0)) <= 1e-15);
  CHECK(std::abs(f.minus.coeff(0, 0) - Complex(2.0, 1.0)) <= 1e-15);
  // (2 - i)(2 + i) / 1 = 5 = S
  const Complex prod = f.plus.coeff(0, 0) * f.minus.coeff(0, 0);
  CHECK(std::abs(prod - Complex(5.0, 0.0)) <= 1e-14);
}

TEST_CASE("factor scalar satisfies c^2 = -1/phi") {
  for (double phi : {1e-8, 1e-5, 1e-2, 2e-5}) {
    const auto p = make_toy_problem(1.0, 1.0, phi, 1.0);
    const auto f = build_complex_factors(p);
    CHECK(std::abs(f.c * f.c + 1.0 / phi) <= 1e-15 / phi);
  }
}

TEST_CASE("factors reject nonpositive phi") {
  auto p = make_toy_problem(1.0, 1.0, 1.0, 1.0);
  p.phi = -1.0;
  CHECK_THROWS_AS(build_complex_factors(p), ContractError);
}

TEST_CASE("dense reconstruction of the complex factorization equals S") {
  for (double phi : {1e-8, 1e-5, 1e-2}) {
    const auto p = make_thermal_problem(4, phi);
    const auto f = build_complex_factors(p);
    const CMat plus = f.plus.to_dense();
    const CMat minus = f.minus.to_dense();
    const CMat vc = p.ops.V.to_dense().cast<Complex>();
    const CMat rebuilt = plus * dense_solve<Complex>(vc, minus);
    const Mat s = dense_schur_oracle(p);
    const double err = (rebuilt - s.cast<Complex>()).norm() / s.norm();
    CHECK(err <= 1e-12);
  }
}

TEST_CASE("factor_plus is the elementwise conjugate of factor_minus") {
  const auto p = make_thermal_problem(4, 2e-5);
  const auto f = build_complex_factors(p);
  REQUIRE(f.plus.values.size() == f.minus.values.size());
  for (std::size_t k = 0; k < f.plus.values.size(); ++k)
    CHECK(f.plus.values[k] == std::conj(f.minus.values[k]));
}

TEST_CASE("range space on the 1x1 toy") {
  const auto p = make_toy_problem(1.0, 1.0, 1.0, 1.0);
  const auto out = solve_range_space(p);
  CHECK(out.converged);
  CHECK(out.solution.lambda[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.solution.u[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.solution.y[0] == doctest::Approx(0.5).epsilon(1e-12));
  // constraint K y = V u holds exactly
  CHECK(std::abs(out.solution.y[0] - out.solution.u[0]) <= 1e-15);
}

TEST_CASE("range space matches the dense KKT oracle on n=8 thermal") {
  const auto p = make_thermal_problem(8, 2e-5);
  const auto oracle = dense_kkt_oracle(p);
  const auto out = solve_range_space(p);
  CHECK(out.converged);
  CHECK(!out.imag_leak_warning);
  CHECK((out.solution.y - oracle.y).norm() <= 1e-8 * oracle.y.norm());
  CHECK((out.solution.u - oracle.u).norm() <= 1e-8 * oracle.u.norm());
  CHECK((out.solution.lambda - oracle.lambda).norm() <= 1e-8 * oracle.lambda.norm());
  const auto rep = diagnostics(p, out.solution);
  CHECK(rep.constraint_violation <= 1e-8);
}

TEST_CASE("range space with gmres factor solves agrees with the direct path") {
  const auto p = make_thermal_problem(8, 2e-4);
  FactorSolverConfig direct;
  FactorSolverConfig iter;
  iter.method = FactorMethod::Gmres;
  iter.tol = 1e-12;
  const auto a = solve_range_space(p, direct);
  const auto b = solve_range_space(p, iter);
  CHECK(b.converged);
  CHECK(b.plus_stats.iterations > 0);
  CHECK((a.solution.y - b.solution.y).norm() <= 1e-8 * (1.0 + a.solution.y.norm()));
}

TEST_CASE("target mismatch decreases monotonically as phi decreases") {
  const auto phis = {2e-2, 2e-4, 2e-6};
  double prev = -1.0;
  for (double phi : phis) {
    const auto p = make_thermal_problem(8, phi);
    const auto out = solve_range_space(p);
    const auto rep = diagnostics(p, out.solution);
    if (prev >= 0.0) CHECK(rep.target_mismatch <= prev);
    prev = rep.target_mismatch;
  }
}

TEST_CASE("solve_sp on the 1x1 toy") {
  const auto p = make_toy_problem(2.0, 1.0, 1.0, 1.0);
  const Vec rhs = Vec::Constant(1, 9.0);
  const Vec x = solve_sp(p, rhs);
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dense S_p equals S + (2/sqrt(phi)) K") {
  const auto p = make_thermal_problem(4, 1e-4);
  const Mat k = p.ops.K.to_dense();
  const Mat v = p.ops.V.to_dense();
  const double a = 1.0 / std::sqrt(p.phi);
  const Mat f = k + a * v;
  const Mat sp = f * dense_solve<double>(v, f);
  const Mat s = dense_schur_oracle(p);
  CHECK((sp - (s + (2.0 * a) * k)).norm() <= 1e-12 * sp.norm());
}

TEST_CASE("solve_sp round-trips the S_p application") {
  const auto p = make_thermal_problem(4, 1e-4);
  auto rng = make_rng(17);
  const Vec x0 = random_vector(p.n(), rng);
  // apply S_p densely, then invert through solve_sp
  const Mat k = p.ops.K.to_dense();
  const Mat v = p.ops.V.to_dense();
  const Mat f = k + (1.0 / std::sqrt(p.phi)) * v;
  const Vec rhs = f * dense_solve<double>(v, Vec(f * x0));
  const Vec x = solve_sp(p, rhs);
  CHECK((x - x0).norm() <= 1e-10 * x0.norm());
}

TEST_CASE("pmgw of a zero residual is zero") {
  const auto p = make_thermal_problem(4, 1e-4);
  const Vec r = Vec::Zero(3 * p.n());
  CHECK(apply_pmgw(p, SchurBackend::ExactSc, r).norm() == 0.0);
  CHECK(apply_pmgw(p, SchurBackend::ApproxSp, r).norm() == 0.0);
}

TEST_CASE("pmgw application matches the dense block preconditioner") {
  const auto p = make_thermal_problem(4, 2e-3);
  const int n = p.n();
  auto rng = make_rng(21);
  const Vec r = random_vector(3 * n, rng);
  const Vec z = apply_pmgw(p, SchurBackend::ExactSc, r);
  const Mat v = p.ops.V.to_dense();
  const Mat s = dense_schur_oracle(p);
  Vec expected(3 * n);
  expected.head(n) = dense_solve<double>(v, Vec(r.head(n)));
  expected.segment(n, n) = dense_solve<double>(v, Vec(r.segment(n, n))) / p.phi;
  expected.tail(n) = dense_solve<double>(s, Vec(r.tail(n)));
  CHECK((z - expected).norm() <= 1e-9 * expected.norm());
}

TEST_CASE("murphy-preconditioned operator has at most 3 distinct nonzero eigenvalues") {
  const auto p = make_thermal_problem(4, 2e-3);
  const auto sys = assemble_kkt(p);
  const Mat a = sys.to_dense();
  const int n = p.n();
  Mat pm = Mat::Zero(3 * n, 3 * n);
  pm.block(0, 0, n, n) = p.ops.V.to_dense();
  pm.block(n, n, n, n) = p.phi * p.ops.V.to_dense();
  pm.block(2 * n, 2 * n, n, n) = dense_schur_oracle(p);
  const Vec ev = dense_eigenvalues(a, pm);
  std::vector<double> clusters;
  for (int i = 0; i < ev.size(); ++i) {
    if (std::abs(ev[i]) <= 1e-8) continue;
    bool found = false;
    for (double c : clusters)
      if (std::abs(ev[i] - c) <= 1e-8 * std::max(1.0, std::abs(c))) found = true;
    if (!found) clusters.push_back(ev[i]);
  }
  CHECK(clusters.size() <= 3);
  // the three values are 1 and (1 +- sqrt(5))/2
  const double golden_p = (1.0 + std::sqrt(5.0)) / 2.0;
  const double golden_m = (1.0 - std::sqrt(5.0)) / 2.0;
  for (double c : clusters) {
    const bool known = std::abs(c - 1.0) <= 1e-7 || std::abs(c - golden_p) <= 1e-7 ||
                       std::abs(c - golden_m) <= 1e-7;
    CHECK(known);
  }
}

TEST_CASE("pearson bound: eigenvalues of (S, S_p) lie in [1/2, 1]") {
  for (int n : {4, 8}) {
    for (double phi : {1e-8, 1e-5, 1e-2}) {
      const auto p = make_thermal_problem(n, phi);
      const Mat k = p.ops.K.to_dense();
      const Mat v = p.ops.V.to_dense();
      const Mat f = k + (1.0 / std::sqrt(phi)) * v;
      const Mat sp = f * dense_solve<double>(v, f);
      const Mat s = dense_schur_oracle(p);
      const Mat s_sym = 0.5 * (s + s.transpose());
      const Mat sp_sym = 0.5 * (sp + sp.transpose());
      const Vec ev = dense_eigenvalues(s_sym, sp_sym);
      CHECK(ev[0] >= 0.5 - 1e-10);
      CHECK(ev[ev.size() - 1] <= 1.0 + 1e-10);
    }
  }
}

TEST_CASE("full space with the exact-factorization preconditioner converges in <= 3 iterations") {
  for (double phi : {2e-2, 2e-5}) {
    const auto p = make_thermal_problem(8, phi);
    FullSpaceOptions opt;
    opt.precond = FullSpacePrecond::PmgwSc;
    opt.outer = OuterSolver::Gmres;
    opt.tol = 1e-10;
    opt.inner.method = FactorMethod::DirectLu;
    opt.inner.tol = 1e-12;
    const auto out = solve_full_space(p, opt);
    CHECK(out.stats.converged);
    CHECK(out.stats.iterations <= 3);
  }
}

TEST_CASE("unpreconditioned minres full space solves the kkt system") {
  const auto p = make_thermal_problem(8, 2e-5);
  FullSpaceOptions opt;
  opt.precond = FullSpacePrecond::None;
  opt.outer = OuterSolver::Minres;
  opt.tol = 1e-10;
  opt.max_iter = 20000;
  const auto out = solve_full_space(p, opt);
  CHECK(out.stats.converged);
  const auto rep = diagnostics(p, out.solution);
  CHECK(rep.constraint_violation <= 1e-8);
  // the unpreconditioned system is ill-conditioned at this phi; the oracle
  // agreement is limited to kappa * tol
  const auto oracle = dense_kkt_oracle(p);
  CHECK((out.solution.y - oracle.y).norm() <= 1e-4 * oracle.y.norm());
}

TEST_CASE("pmgw_Sp keeps outer iterations flat across phi") {
  // O(1) iterations independent of phi; the absolute level depends on the
  // (true-residual) stopping rule, the spread must not.
  std::vector<int> iters;
  for (double phi : {1e-2, 1e-5, 1e-8}) {
    const auto p = make_thermal_problem(8, phi);
    FullSpaceOptions opt;
    opt.precond = FullSpacePrecond::PmgwSp;
    opt.outer = OuterSolver::Minres;
    opt.tol = 1e-7;
    opt.inner.method = FactorMethod::DirectLu;
    const auto out = solve_full_space(p, opt);
    CHECK(out.stats.converged);
    CHECK(out.stats.iterations <= 20);
    iters.push_back(out.stats.iterations);
  }
  const auto [lo, hi] = std::minmax_element(iters.begin(), iters.end());
  CHECK(*hi - *lo <= 3);
}

TEST_CASE("pmgw_Sc with minres is rejected") {
  const auto p = make_thermal_problem(4, 1e-3);
  FullSpaceOptions opt;
  opt.precond = FullSpacePrecond::PmgwSc;
  opt.outer = OuterSolver::Minres;
  CHECK_THROWS_AS(solve_full_space(p, opt), ContractError);
}

TEST_CASE("range-space and full-space solutions agree") {
  for (double phi : {1e-2, 1e-5, 1e-8}) {
    const auto p = make_thermal_problem(8, phi);
    const auto rs = solve_range_space(p);
    FullSpaceOptions opt;
    opt.precond = FullSpacePrecond::PmgwSc;
    opt.outer = OuterSolver::Gmres;
    opt.tol = 1e-12;
    const auto fs = solve_full_space(p, opt);
    CHECK((rs.solution.y - fs.solution.y).norm() <= 1e-7 * (1.0 + fs.solution.y.norm()));
    CHECK((rs.solution.u - fs.solution.u).norm() <= 1e-7 * (1.0 + fs.solution.u.norm()));
  }
}

TEST_CASE("minres agrees with the dense factorization oracle on the n=4 kkt system") {
  const auto p = make_thermal_problem(4, 2e-3);
  const auto sys = assemble_kkt(p);
  auto rng = make_rng(33);
  const Vec b = random_vector(3 * p.n(), rng);
  MinresOptions opt;
  opt.tol = 1e-10;
  opt.max_iter = 5000;
  auto [x, st] = minres(sys.as_operator(), b, opt);
  CHECK(st.converged);
  const Vec oracle = dense_solve<double>(sys.to_dense(), b);
  CHECK((x - oracle).norm() <= 1e-9 * oracle.norm());
}

TEST_CASE("diagnostics on the exact dense solution") {
  const auto p = make_thermal_problem(4, 2e-4);
  const auto oracle = dense_kkt_oracle(p);
  const auto rep = diagnostics(p, oracle);
  CHECK(rep.violation_defined);
  CHECK(rep.constraint_violation <= 1e-12);
  CHECK(rep.objective >= 0.0);
}

TEST_CASE("diagnostics of y=ybar, u=0 equals the direct evaluation") {
  const auto p = make_thermal_problem(4, 2e-4);
  SolutionTriple t;
  t.y = p.target_state;
  t.u = Vec::Zero(p.n());
  t.lambda = Vec::Zero(p.n());
  const auto rep = diagnostics(p, t);
  const Vec ky = p.ops.K * p.target_state;
  const Vec res = ky + p.ops.Kc * p.boundary_values;
  CHECK(rep.constraint_violation == doctest::Approx(res.norm() / ky.norm()).epsilon(1e-13));
  CHECK(rep.target_mismatch == 0.0);
}

TEST_CASE("control norm is homogeneous of degree one") {
  const auto p = make_thermal_problem(4, 2e-4);
  const auto oracle = dense_kkt_oracle(p);
  auto rep1 = diagnostics(p, oracle);
  SolutionTriple scaled = oracle;
  scaled.u *= 2.0;
  auto rep2 = diagnostics(p, scaled);
  CHECK(rep2.control_norm == doctest::Approx(2.0 * rep1.control_norm).epsilon(1e-13));
}
