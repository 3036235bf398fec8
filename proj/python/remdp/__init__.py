"""Residual-based reconstruction of marginal queries under zCDP.

Thin re-export of the native module: domains and record sets, the two
mechanisms, archive replay, the constrained solver, and the error metrics.
"""

from remdp._core import (
    BudgetError,
    Domain,
    Error,
    RecordSet,
    grem_lnn,
    load_csv,
    replay,
    run_residualplanner_style,
    run_scalable_mwem,
    save_csv,
    solve_rho,
    synthetic_titanic_shaped,
    trunc,
    trunc_rescale,
    workload_error,
    zcdp_to_eps_delta,
)

__all__ = [
    "BudgetError",
    "Domain",
    "Error",
    "RecordSet",
    "grem_lnn",
    "load_csv",
    "replay",
    "run_residualplanner_style",
    "run_scalable_mwem",
    "save_csv",
    "solve_rho",
    "synthetic_titanic_shaped",
    "trunc",
    "trunc_rescale",
    "workload_error",
    "zcdp_to_eps_delta",
]

__version__ = "0.1.0"
