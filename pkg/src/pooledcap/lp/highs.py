"""HiGHS backend through :mod:`scipy.optimize` (``linprog`` and ``milp``)."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .program import (EQ, GE, INFEASIBLE, ITERATION_LIMIT, LE, NODE_LIMIT, OPTIMAL,
                      UNBOUNDED, LinearProgram, LpSolution)

_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9,
               "presolve": True}


def solve_lp_highs(lp: LinearProgram) -> LpSolution:
    le = lp.sense == LE
    ge = lp.sense == GE
    eq = lp.sense == EQ
    ub_rows = np.nonzero(le | ge)[0]
    sign = np.where(ge[ub_rows], -1.0, 1.0)
    A_ub = sp.diags(sign) @ lp.A[ub_rows] if ub_rows.size else None
    b_ub = sign * lp.rhs[ub_rows] if ub_rows.size else None
    eq_rows = np.nonzero(eq)[0]
    A_eq = lp.A[eq_rows] if eq_rows.size else None
    b_eq = lp.rhs[eq_rows] if eq_rows.size else None
    hi = np.where(np.isfinite(lp.hi), lp.hi, None)
    res = linprog(lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=list(zip(lp.lo, hi)), method="highs", options=_LP_OPTIONS)
    if res.status == 2:
        return LpSolution(INFEASIBLE)
    if res.status == 3:
        return LpSolution(UNBOUNDED)
    if res.status == 1:
        return LpSolution(ITERATION_LIMIT)
    if res.status != 0:
        return LpSolution(INFEASIBLE, info={"message": res.message})
    y = np.zeros(lp.n_rows)
    if ub_rows.size:
        y[ub_rows] = sign * res.ineqlin.marginals
    if eq_rows.size:
        y[eq_rows] = res.eqlin.marginals
    x = np.clip(res.x, lp.lo, lp.hi)
    return LpSolution(OPTIMAL, x=x, objective=float(lp.c @ x + lp.constant), duals=y,
                      reduced_costs=lp.c - lp.A.T @ y, iterations=int(res.nit))


def solve_mip_highs(lp: LinearProgram, gap: float, node_limit: int | None = None,
                    time_limit: float | None = None) -> LpSolution:
    # equilibrate rows: badly scaled cut rows slow HiGHS down by orders of magnitude
    A = lp.A
    scale = np.ones(lp.n_rows)
    if lp.n_rows:
        big = abs(A).max(axis=1).toarray().ravel()
        scale = np.where(big > 0, 1.0 / np.where(big > 0, big, 1.0), 1.0)
        A = sp.diags(scale) @ A
    rhs = lp.rhs * scale
    lb = np.where(lp.sense == LE, -np.inf, rhs)
    ub = np.where(lp.sense == GE, np.inf, rhs)
    options = {"mip_rel_gap": gap, "disp": False, "presolve": True}
    if node_limit is not None:
        options["node_limit"] = node_limit
    if time_limit is not None:
        options["time_limit"] = time_limit
    cons = [LinearConstraint(A, lb, ub)] if lp.n_rows else []
    res = milp(lp.c, constraints=cons, integrality=lp.integer.astype(int),
               bounds=Bounds(lp.lo, lp.hi), options=options)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 2:
        return LpSolution(INFEASIBLE, nodes=nodes)
    if res.status == 3:
        return LpSolution(UNBOUNDED, nodes=nodes)
    if res.x is None:
        return LpSolution(NODE_LIMIT if res.status == 1 else INFEASIBLE, nodes=nodes,
                          info={"message": res.message})
    x = np.array(res.x, dtype=float)
    x[lp.integer] = np.round(x[lp.integer])
    x = np.clip(x, lp.lo, lp.hi)
    obj = float(lp.c @ x + lp.constant)
    bound = getattr(res, "mip_dual_bound", None)
    bound = obj if bound is None or not np.isfinite(bound) else float(bound) + lp.constant
    bound = min(bound, obj)
    status = OPTIMAL if res.status == 0 else NODE_LIMIT
    return LpSolution(status, x=x, objective=obj, bound=bound,
                      gap=_rel_gap(obj, bound), nodes=nodes)


def _rel_gap(ub: float, lb: float) -> float:
    return (ub - lb) / max(abs(ub), 1e-9) if ub > lb else 0.0
