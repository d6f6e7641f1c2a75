"""LP/MIP kernel: a dense simplex with branch and bound, plus a HiGHS backend.

``backend="native"`` runs the in-house dense simplex (exact duals, optimality
certificate checked on every solve); ``backend="highs"`` delegates to HiGHS
for problems too large for a dense tableau.
"""
from __future__ import annotations

from .bnb import branch_and_bound
from .highs import solve_lp_highs, solve_mip_highs
from .program import (EQ, GE, INFEASIBLE, ITERATION_LIMIT, LE, NODE_LIMIT, OPTIMAL, TOL_DUAL,
                      TOL_FEAS, TOL_INT, UNBOUNDED, LinearProgram, LpBuilder, LpSolution,
                      SolverError, certificate_violations, dump_lp)
from .simplex import solve_dense

BACKENDS = ("native", "highs")


def solve_lp(lp: LinearProgram, backend: str = "native", verify: bool = True) -> LpSolution:
    """Solve the continuous relaxation of ``lp``."""
    if backend == "native":
        return solve_dense(lp, verify=verify)
    if backend == "highs":
        sol = solve_lp_highs(lp)
        if verify and sol.optimal:
            bad = certificate_violations(lp, sol)
            if bad:
                raise SolverError(f"HiGHS optimality certificate failed: {bad}")
        return sol
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def solve_mip(lp: LinearProgram, gap: float = 1e-6, improvement_target: float | None = None,
              backend: str = "native", node_limit: int | None = None,
              time_limit: float | None = None) -> LpSolution:
    """Branch and bound to relative ``gap``.

    With ``improvement_target`` the row ``c.x + constant <= target`` is added,
    so an ``infeasible`` status certifies that no solution beats the target.
    Pure LPs (no integer columns) go straight to :func:`solve_lp`.
    ``time_limit`` (seconds) is honoured by the HiGHS backend only; a solve
    cut short returns status ``node_limit`` with the incumbent, if any.
    """
    if improvement_target is not None:
        lp = lp.with_row(lp.c, LE, improvement_target - lp.constant, name="improvement_target")
    if not lp.integer.any():
        sol = solve_lp(lp, backend=backend)
        if sol.optimal:
            sol.bound, sol.gap = sol.objective, 0.0
        return sol
    if backend == "native":
        return branch_and_bound(lp, lambda sub: solve_dense(sub), gap=gap,
                                node_limit=node_limit or 100_000)
    if backend == "highs":
        return solve_mip_highs(lp, gap, node_limit=node_limit, time_limit=time_limit)
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


__all__ = [
    "BACKENDS", "EQ", "GE", "INFEASIBLE", "ITERATION_LIMIT", "LE", "NODE_LIMIT", "OPTIMAL",
    "TOL_DUAL", "TOL_FEAS", "TOL_INT", "UNBOUNDED", "LinearProgram", "LpBuilder", "LpSolution",
    "SolverError", "branch_and_bound", "certificate_violations", "dump_lp", "solve_lp",
    "solve_mip",
]
