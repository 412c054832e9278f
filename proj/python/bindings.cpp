#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pdeopt/control.hpp"
#include "pdeopt/experiments.hpp"
#include "pdeopt/feti.hpp"
#include "pdeopt/verify.hpp"

namespace py = pybind11;
using namespace pdeopt;

namespace {

FactorSolverConfig make_factor_config(const std::string& method, double tol, int s_x, int s_y,
                                      bool augment) {
  FactorSolverConfig cfg;
  if (method == "direct")
    cfg.method = FactorMethod::DirectLu;
  else if (method == "gmres")
    cfg.method = FactorMethod::Gmres;
  else if (method == "feti")
    cfg.method = FactorMethod::FetiDp;
  else
    throw ContractError("factor method must be direct, gmres or feti");
  cfg.tol = tol;
  cfg.feti.s_x = s_x;
  cfg.feti.s_y = s_y;
  cfg.feti.augment = augment;
  cfg.feti.tol = tol;
  return cfg;
}

py::dict stats_dict(const SolveStats& st) {
  py::dict d;
  d["iterations"] = st.iterations;
  d["relative_residual"] = st.relative_residual;
  d["converged"] = st.converged;
  d["wall_time"] = st.wall_time;
  return d;
}

py::dict diagnostics_dict(const DiagnosticsReport& rep) {
  py::dict d;
  d["constraint_violation"] = rep.constraint_violation;
  d["target_mismatch"] = rep.target_mismatch;
  d["control_norm"] = rep.control_norm;
  d["objective"] = rep.objective;
  d["violation_defined"] = rep.violation_defined;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Distributed PDE-constrained optimal control: complex Schur-complement "
            "factorization with range-space/full-space solvers and a FETI-DP backend";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

  py::class_<StructuredMesh>(m, "StructuredMesh")
      .def_readonly("n_x", &StructuredMesh::n_x)
      .def_readonly("n_y", &StructuredMesh::n_y)
      .def_readonly("h", &StructuredMesh::h)
      .def_property_readonly("n_nodes", &StructuredMesh::n_nodes)
      .def_property_readonly("n_elements", &StructuredMesh::n_elements);

  py::class_<ControlProblem>(m, "ControlProblem")
      .def_property_readonly("n", &ControlProblem::n)
      .def_property_readonly("m", &ControlProblem::m)
      .def_readonly("phi", &ControlProblem::phi)
      .def_readonly("mesh", &ControlProblem::mesh)
      .def_property_readonly("target_state",
                             [](const ControlProblem& p) { return p.target_state; })
      .def_property_readonly("boundary_values",
                             [](const ControlProblem& p) { return p.boundary_values; })
      .def("stiffness_dense", [](const ControlProblem& p) { return p.ops.K.to_dense(); },
           "dense copy of K (small problems only)")
      .def("mass_dense", [](const ControlProblem& p) { return p.ops.V.to_dense(); })
      .def("constrained_stiffness_dense",
           [](const ControlProblem& p) { return p.ops.Kc.to_dense(); })
      .def("kkt_rhs", &ControlProblem::kkt_rhs)
      .def("schur_rhs", &ControlProblem::schur_rhs);

  m.def("make_thermal_problem", &make_thermal_problem, py::arg("n"), py::arg("phi"),
        "Unit-square heat control problem with the piecewise target state");
  m.def("make_cantilever_problem", &make_cantilever_problem, py::arg("n"), py::arg("phi"),
        py::arg("pressure") = 100e3,
        "Plane-strain 3:1 cantilever, clamped at x=0, pressure-load target");

  m.def(
      "solve_range_space",
      [](const ControlProblem& p, const std::string& method, double tol, int s_x, int s_y,
         bool augment) {
        const auto out = solve_range_space(p, make_factor_config(method, tol, s_x, s_y, augment));
        py::dict d;
        d["y"] = out.solution.y;
        d["u"] = out.solution.u;
        d["lambda"] = out.solution.lambda;
        d["imag_leak"] = out.solution.imag_leak;
        d["converged"] = out.converged;
        d["imag_leak_warning"] = out.imag_leak_warning;
        d["plus_stats"] = stats_dict(out.plus_stats);
        d["minus_stats"] = stats_dict(out.minus_stats);
        return d;
      },
      py::arg("problem"), py::arg("method") = "direct", py::arg("tol") = 1e-12,
      py::arg("s_x") = 2, py::arg("s_y") = 2, py::arg("augment") = true,
      "Dual solve through the two complex-conjugate factors, then primal recovery");

  m.def(
      "solve_full_space",
      [](const ControlProblem& p, const std::string& precond, const std::string& outer,
         double tol, const std::string& inner_method, double inner_tol, int s_x, int s_y) {
        FullSpaceOptions opt;
        if (precond == "none")
          opt.precond = FullSpacePrecond::None;
        else if (precond == "sp")
          opt.precond = FullSpacePrecond::PmgwSp;
        else if (precond == "sc")
          opt.precond = FullSpacePrecond::PmgwSc;
        else
          throw ContractError("precond must be none, sp or sc");
        if (outer == "minres")
          opt.outer = OuterSolver::Minres;
        else if (outer == "gmres")
          opt.outer = OuterSolver::Gmres;
        else
          throw ContractError("outer must be minres or gmres");
        opt.tol = tol;
        opt.inner = make_factor_config(inner_method, inner_tol, s_x, s_y, true);
        const auto out = solve_full_space(p, opt);
        py::dict d;
        d["y"] = out.solution.y;
        d["u"] = out.solution.u;
        d["lambda"] = out.solution.lambda;
        d["stats"] = stats_dict(out.stats);
        return d;
      },
      py::arg("problem"), py::arg("precond") = "none", py::arg("outer") = "minres",
      py::arg("tol") = 1e-10, py::arg("inner_method") = "direct", py::arg("inner_tol") = 1e-12,
      py::arg("s_x") = 2, py::arg("s_y") = 2,
      "Simultaneous KKT solve, optionally with the block-diagonal Schur preconditioner");

  m.def(
      "diagnostics",
      [](const ControlProblem& p, const Vec& y, const Vec& u, const Vec& lambda) {
        SolutionTriple t;
        t.y = y;
        t.u = u;
        t.lambda = lambda;
        return diagnostics_dict(diagnostics(p, t));
      },
      py::arg("problem"), py::arg("y"), py::arg("u"), py::arg("lambda"));

  m.def(
      "feti_solve",
      [](const ControlProblem& p, std::complex<double> mass_coeff, const CVec& rhs, int s_x,
         int s_y, bool augment, double tol) {
        auto part = std::make_shared<const FetiPartition>(
            partition_structured(p.mesh, p.physics, p.ops, s_x, s_y));
        OperatorSpec spec;
        spec.mass_coeff = mass_coeff;
        FetiConfig cfg;
        cfg.s_x = s_x;
        cfg.s_y = s_y;
        cfg.augment = augment;
        cfg.tol = tol;
        ComplexFetiSolver solver(p.mesh, p.physics, p.ops, part, spec, cfg);
        auto [x, stats] = solver.solve(rhs);
        py::dict d;
        d["x"] = x;
        d["iterations"] = stats.dual.iterations;
        d["converged"] = stats.dual.converged;
        d["interface_jump"] = stats.interface_jump;
        d["primal_residual"] = stats.primal_residual;
        d["n_lambda"] = stats.n_lambda;
        d["coarse_dim"] = stats.coarse_dim;
        return d;
      },
      py::arg("problem"), py::arg("mass_coeff"), py::arg("rhs"), py::arg("s_x") = 2,
      py::arg("s_y") = 2, py::arg("augment") = true, py::arg("tol") = 1e-10,
      "FETI-DP solve of (K + mass_coeff*V) x = rhs on the problem's mesh");

  m.def(
      "run_experiment_json",
      [](const std::string& config_json, const std::string& out_path) {
        const auto cfg = ExperimentConfig::from_json(config_json);
        const auto rows = run_experiment(cfg, out_path);
        return rows_to_json(rows);
      },
      py::arg("config_json"), py::arg("out_path") = "",
      "Run one experiment from a JSON config; returns the result rows as JSON");

  m.def("default_config_json", [](const std::string& kind) {
    return ExperimentConfig::defaults_for(experiment_kind_from_name(kind)).to_json();
  });

  m.def("acceptance_checks", []() {
    py::list out;
    for (const auto& r : run_acceptance_checks()) {
      py::dict d;
      d["id"] = r.id;
      d["name"] = r.name;
      d["passed"] = r.passed;
      d["detail"] = r.detail;
      out.append(d);
    }
    return out;
  });
}
