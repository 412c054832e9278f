"""Distributed PDE-constrained optimal control via the complex factorization
of the Schur complement, with range-space/full-space solvers and a FETI-DP
domain-decomposition backend."""

from ._core import (
    ContractError,
    NumericalError,
    StructuredMesh,
    ControlProblem,
    make_thermal_problem,
    make_cantilever_problem,
    solve_range_space,
    solve_full_space,
    diagnostics,
    feti_solve,
    run_experiment_json,
    default_config_json,
    acceptance_checks,
)

__all__ = [
    "ContractError",
    "NumericalError",
    "StructuredMesh",
    "ControlProblem",
    "make_thermal_problem",
    "make_cantilever_problem",
    "solve_range_space",
    "solve_full_space",
    "diagnostics",
    "feti_solve",
    "run_experiment_json",
    "default_config_json",
    "acceptance_checks",
]
