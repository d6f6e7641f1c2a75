"""Best-first branch and bound over LP relaxations."""
from __future__ import annotations

import heapq
import itertools
import math
from typing import Callable

import numpy as np

from .program import (INFEASIBLE, NODE_LIMIT, OPTIMAL, TOL_INT, UNBOUNDED, LinearProgram,
                      LpSolution)


def branch_and_bound(lp: LinearProgram, relax: Callable[[LinearProgram], LpSolution],
                     gap: float = 1e-6, node_limit: int = 100_000) -> LpSolution:
    """Minimise ``lp`` with integrality, solving relaxations with ``relax``.

    Nodes are explored best bound first (deeper node on ties).  Branching picks
    the most fractional integer column, lowest index on ties.  Stops once the
    relative gap between incumbent and best open bound is at most ``gap``.
    """
    int_cols = np.nonzero(lp.integer)[0]
    base = lp.relaxed()
    incumbent = None
    best = math.inf
    tick = itertools.count()
    nodes = 0
    lower = -math.inf
    bound_trace = []

    root = relax(base)
    if root.status == UNBOUNDED:
        return LpSolution(UNBOUNDED)
    if root.status != OPTIMAL:
        return LpSolution(root.status if root.status != OPTIMAL else INFEASIBLE)
    heap = [(root.objective, 0, next(tick), lp.lo.copy(), lp.hi.copy(), root)]

    while heap:
        lower = heap[0][0]
        bound_trace.append(lower)
        if incumbent is not None and _gap(best, lower) <= gap:
            break
        if nodes >= node_limit:
            break
        bnd, negdepth, _, lo, hi, sol = heapq.heappop(heap)
        nodes += 1
        if bnd >= best - 1e-12 * max(1.0, abs(best)):
            continue
        frac = sol.x[int_cols] - np.floor(sol.x[int_cols])
        dist = np.minimum(frac, 1.0 - frac)
        open_ = dist > TOL_INT
        if not open_.any():
            x = sol.x.copy()
            x[int_cols] = np.round(x[int_cols])
            obj = float(lp.c @ x + lp.constant)
            if obj < best:
                best, incumbent = obj, x
            continue
        # most fractional; argmax returns the lowest index on ties
        k = int(np.argmax(np.where(open_, dist, -1.0)))
        j = int(int_cols[k])
        v = sol.x[j]
        for side in (0, 1):
            nlo, nhi = lo.copy(), hi.copy()
            if side == 0:
                nhi[j] = math.floor(v)
            else:
                nlo[j] = math.ceil(v)
            if nlo[j] > nhi[j]:
                continue
            child = relax(base.with_bounds(nlo, nhi))
            if child.status != OPTIMAL:
                continue
            if child.objective < best:
                heapq.heappush(heap, (child.objective, negdepth - 1, next(tick), nlo, nhi, child))
    else:
        lower = best

    if incumbent is None:
        status = NODE_LIMIT if heap else INFEASIBLE
        return LpSolution(status, nodes=nodes, bound=lower)
    lower = min(lower, best)
    status = OPTIMAL if (not heap or _gap(best, lower) <= gap) else NODE_LIMIT
    return LpSolution(status, x=incumbent, objective=best, bound=lower, gap=_gap(best, lower),
                      nodes=nodes, info={"bound_trace": bound_trace})


def _gap(ub: float, lb: float) -> float:
    if ub <= lb:
        return 0.0
    return (ub - lb) / max(abs(ub), 1e-9)
