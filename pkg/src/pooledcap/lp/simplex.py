"""Dense two-phase primal simplex on a full tableau.

Variables are shifted to ``x = lo + x'`` and finite upper bounds become
explicit rows.  Every (sign-normalised) row carries an identity column, either
its slack or an artificial, so the artificial block of the tableau is always
``B^-1`` and the duals fall out as ``c_B B^-1``.  Pricing is Dantzig until
``5 (rows + cols)`` iterations have passed, then Bland's rule, which rules out
cycling.
"""
from __future__ import annotations

import numpy as np

from .program import (EQ, GE, INFEASIBLE, ITERATION_LIMIT, LE, OPTIMAL, UNBOUNDED,
                      LinearProgram, LpSolution, SolverError, certificate_violations)

PIVOT_TOL = 1e-9
COST_TOL = 1e-9


class _Tableau:
    def __init__(self, T, rhs, basis, n_struct, art_start):
        self.T = T            # m x N constraint block
        self.b = rhs          # current basic values
        self.basis = basis    # basic column per row
        self.n_struct = n_struct
        self.art_start = art_start
        self.iterations = 0

    def pivot(self, r, q):
        T = self.T
        piv = T[r, q]
        T[r] /= piv
        self.b[r] /= piv
        col = T[:, q].copy()
        col[r] = 0.0
        nz = np.nonzero(np.abs(col) > 0.0)[0]
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
            self.b[nz] -= col[nz] * self.b[r]
        self.basis[r] = q
        self.iterations += 1

    def run(self, cost, allowed, max_iter, bland_after):
        """Minimise ``cost`` over the current tableau; returns a status string."""
        T = self.T
        local = 0
        while True:
            cb = cost[self.basis]
            red = cost - cb @ T
            red[~allowed] = 0.0
            red[self.basis] = 0.0
            if local >= bland_after:
                cand = np.nonzero(red < -COST_TOL)[0]
                if cand.size == 0:
                    return OPTIMAL
                q = int(cand[0])
            else:
                q = int(np.argmin(red))
                if red[q] >= -COST_TOL:
                    return OPTIMAL
            col = T[:, q]
            pos = col > PIVOT_TOL
            if not np.any(pos):
                return UNBOUNDED
            ratios = np.full(col.size, np.inf)
            ratios[pos] = np.maximum(self.b[pos], 0.0) / col[pos]
            best = ratios.min()
            ties = np.nonzero(ratios <= best + 1e-12 * max(1.0, best))[0]
            # lowest basic index among ties (Bland), also a stable choice for Dantzig
            r = int(ties[np.argmin(self.basis[ties])])
            self.pivot(r, q)
            local += 1
            if self.iterations >= max_iter:
                return ITERATION_LIMIT


def solve_dense(lp: LinearProgram, max_iter: int | None = None, verify: bool = True) -> LpSolution:
    """Solve the continuous relaxation of ``lp`` with the dense simplex."""
    A0 = lp.A.toarray()
    m0, n = A0.shape
    lo, hi = lp.lo, lp.hi
    span = hi - lo
    if np.any(span < -1e-12):
        return LpSolution(INFEASIBLE)
    ub_cols = np.nonzero(np.isfinite(span))[0]

    # rows: original rows, then x'_j <= hi_j - lo_j
    m = m0 + ub_cols.size
    A = np.zeros((m, n))
    A[:m0] = A0
    A[m0 + np.arange(ub_cols.size), ub_cols] = 1.0
    b = np.empty(m)
    b[:m0] = lp.rhs - A0 @ lo
    b[m0:] = span[ub_cols]
    sense = np.empty(m, dtype=object)
    sense[:m0] = lp.sense
    sense[m0:] = LE

    slack_rows = np.nonzero(sense != EQ)[0]
    n_slack = slack_rows.size
    N = n + n_slack + m
    T = np.zeros((m, N))
    T[:, :n] = A
    for k, i in enumerate(slack_rows):
        T[i, n + k] = 1.0 if sense[i] == LE else -1.0
    flip = np.where(b < 0.0, -1.0, 1.0)
    T[:, :n + n_slack] *= flip[:, None]
    b = b * flip
    art = n + n_slack
    T[:, art:] = np.eye(m)

    basis = art + np.arange(m)
    for k, i in enumerate(slack_rows):
        if T[i, n + k] > 0.0:
            basis[i] = n + k
    tab = _Tableau(T, b.copy(), basis, n, art)
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    bland_after = 5 * (m + n)

    allowed = np.ones(N, bool)
    allowed[art:] = False
    if np.any(basis >= art):
        cost1 = np.zeros(N)
        cost1[art:] = 1.0
        status = tab.run(cost1, allowed, max_iter, bland_after)
        if status == ITERATION_LIMIT:
            return LpSolution(ITERATION_LIMIT, iterations=tab.iterations)
        infeas = float(tab.b[tab.basis >= art].sum())
        if infeas > 1e-7 * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LpSolution(INFEASIBLE, iterations=tab.iterations)

    # drive basic artificials out; rows where that is impossible are redundant
    keep = np.ones(m, bool)
    for r in range(m):
        if tab.basis[r] >= art:
            row = tab.T[r, :art]
            cand = np.nonzero(np.abs(row) > 1e-7)[0]
            if cand.size:
                tab.pivot(r, int(cand[np.argmax(np.abs(row[cand]))]))
            else:
                keep[r] = False
    if not keep.all():
        tab.T = tab.T[keep]
        tab.b = tab.b[keep]
        tab.basis = tab.basis[keep]

    cost2 = np.zeros(N)
    cost2[:n] = lp.c
    status = tab.run(cost2, allowed, max_iter, bland_after)
    if status != OPTIMAL:
        return LpSolution(status, iterations=tab.iterations)

    xfull = np.zeros(N)
    xfull[tab.basis] = np.maximum(tab.b, 0.0)
    x = lo + xfull[:n]
    # duals of the normalised rows: c_B B^-1, B^-1 being the artificial block
    y_kept = cost2[tab.basis] @ tab.T[:, art:]
    y_all = np.zeros(m)
    y_all[:] = y_kept
    y = (y_all * flip)[:m0]
    sol = LpSolution(OPTIMAL, x=x, objective=float(lp.c @ x + lp.constant), duals=y,
                     reduced_costs=lp.c - lp.A.T @ y, iterations=tab.iterations)
    if verify:
        bad = certificate_violations(lp, sol)
        if bad:
            raise SolverError(f"simplex optimality certificate failed: {bad}")
    return sol
