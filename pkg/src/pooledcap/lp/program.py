"""Linear program container, solution record and optimality certificate."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

LE, GE, EQ = "<=", ">=", "="

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
NODE_LIMIT = "node_limit"

# tolerances shared by both backends
TOL_FEAS = 1e-7
TOL_INT = 1e-6
TOL_DUAL = 1e-7


class SolverError(RuntimeError):
    """Raised when a solve fails in a way the caller cannot recover from."""


@dataclass
class LinearProgram:
    """minimize c.x + constant  s.t.  rows (A x  sense  rhs),  lo <= x <= hi.

    ``hi`` may hold ``inf``; ``lo`` must be finite.  ``integer`` flags the
    columns restricted to integral values.
    """

    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    integer: np.ndarray
    constant: float = 0.0
    col_names: Optional[list] = None
    row_names: Optional[list] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        if n == 0:
            raise ValueError("linear program needs at least one variable")
        self.A = sp.csr_matrix(self.A, dtype=float)
        if self.A.shape[1] != n:
            raise ValueError(f"A has {self.A.shape[1]} columns, c has {n}")
        m = self.A.shape[0]
        self.sense = np.asarray(self.sense, dtype=object).reshape(m)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(m)
        self.lo = np.asarray(self.lo, dtype=float).reshape(n)
        self.hi = np.asarray(self.hi, dtype=float).reshape(n)
        self.integer = np.asarray(self.integer, dtype=bool).reshape(n)
        bad = set(self.sense) - {LE, GE, EQ}
        if bad:
            raise ValueError(f"unknown row sense {bad}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A.data))
                and np.all(np.isfinite(self.rhs))):
            raise ValueError("coefficients must be finite")
        if not np.all(np.isfinite(self.lo)):
            raise ValueError("lower bounds must be finite")
        if np.any(self.lo > self.hi):
            raise ValueError("lo > hi for some variable")

    @property
    def n_cols(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def with_bounds(self, lo, hi) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.sense, self.rhs, lo, hi, self.integer,
                             self.constant, self.col_names, self.row_names)

    def with_row(self, coefs, sense, rhs, name=None) -> "LinearProgram":
        A = sp.vstack([self.A, sp.csr_matrix(np.asarray(coefs, dtype=float).reshape(1, -1))],
                      format="csr")
        names = None if self.row_names is None else list(self.row_names) + [name]
        return LinearProgram(self.c, A, np.append(self.sense, sense), np.append(self.rhs, rhs),
                             self.lo, self.hi, self.integer, self.constant, self.col_names, names)

    def relaxed(self) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.sense, self.rhs, self.lo, self.hi,
                             np.zeros(self.n_cols, bool), self.constant, self.col_names,
                             self.row_names)


@dataclass
class LpSolution:
    """Result of an LP or MIP solve.

    ``duals[i]`` is the sensitivity of the optimal objective to ``rhs[i]``, so
    it is >= 0 on binding ``>=`` rows and <= 0 on binding ``<=`` rows.
    ``reduced_costs = c - A^T duals``.  For MIPs ``bound`` is the proven lower
    bound and duals are not reported.
    """

    status: str
    x: Optional[np.ndarray] = None
    objective: float = float("nan")
    duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    bound: float = float("nan")
    gap: float = float("nan")
    iterations: int = 0
    nodes: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class LpBuilder:
    """Accumulates columns and rows, then emits a :class:`LinearProgram`."""

    def __init__(self):
        self.c: list[float] = []
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.integer: list[bool] = []
        self.col_names: list = []
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list = []
        self.constant = 0.0

    def add_var(self, cost=0.0, lo=0.0, hi=np.inf, integer=False, name=None) -> int:
        self.c.append(float(cost))
        self.lo.append(float(lo))
        self.hi.append(float(hi))
        self.integer.append(bool(integer))
        self.col_names.append(name)
        return len(self.c) - 1

    def add_row(self, terms, sense, rhs, name=None) -> int:
        """``terms`` is an iterable of ``(column, coefficient)`` pairs."""
        r = len(self.rhs)
        for j, a in terms:
            if a != 0.0:
                self._rows.append(r)
                self._cols.append(j)
                self._vals.append(float(a))
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name)
        return r

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    def build(self) -> LinearProgram:
        n, m = len(self.c), len(self.rhs)
        A = sp.csr_matrix((self._vals, (self._rows, self._cols)), shape=(m, n))
        return LinearProgram(np.array(self.c), A, np.array(self.sense, dtype=object),
                             np.array(self.rhs), np.array(self.lo), np.array(self.hi),
                             np.array(self.integer), self.constant, self.col_names,
                             self.row_names)


def certificate_violations(lp: LinearProgram, sol: LpSolution, tol: float = TOL_DUAL) -> dict:
    """Primal feasibility, dual sign feasibility, complementary slackness and
    strong duality residuals of an optimal LP solution.

    Rows are scaled to unit infinity norm and costs by ``max(1, |c|_inf)`` so
    that the absolute ``tol`` is meaningful across problem scales.  Returns a
    dict of the residuals that exceed ``tol`` (empty when the certificate holds).
    """
    A = lp.A
    x, y = sol.x, sol.duals
    row_scale = np.maximum(abs(A).max(axis=1).toarray().ravel(), 1e-12) if lp.n_rows else np.ones(0)
    cscale = max(1.0, float(np.max(np.abs(lp.c)))) if lp.n_cols else 1.0
    act = A @ x
    resid = (act - lp.rhs) / row_scale
    yn = y * row_scale / cscale
    out = {}

    viol = np.zeros(lp.n_rows)
    viol[lp.sense == LE] = np.maximum(resid[lp.sense == LE], 0.0)
    viol[lp.sense == GE] = np.maximum(-resid[lp.sense == GE], 0.0)
    viol[lp.sense == EQ] = np.abs(resid[lp.sense == EQ])
    bviol = np.maximum(lp.lo - x, 0.0) + np.maximum(x - lp.hi, 0.0)
    pf = max(viol.max(initial=0.0), bviol.max(initial=0.0))
    if pf > tol:
        out["primal"] = pf

    dsign = np.zeros(lp.n_rows)
    dsign[lp.sense == LE] = np.maximum(yn[lp.sense == LE], 0.0)
    dsign[lp.sense == GE] = np.maximum(-yn[lp.sense == GE], 0.0)
    d = (lp.c - A.T @ y) / cscale
    at_lo = np.abs(x - lp.lo) <= tol * np.maximum(1.0, np.abs(lp.lo))
    at_hi = np.isfinite(lp.hi) & (np.abs(x - lp.hi) <= tol * np.maximum(1.0, np.abs(lp.hi)))
    dv = np.where(at_lo & at_hi, 0.0,
                  np.where(at_lo, np.maximum(-d, 0.0),
                           np.where(at_hi, np.maximum(d, 0.0), np.abs(d))))
    df = max(dsign.max(initial=0.0), dv.max(initial=0.0))
    if df > tol:
        out["dual"] = df

    cs = np.abs(yn * resid).max(initial=0.0)
    if cs > tol:
        out["complementary_slackness"] = cs

    primal_obj = float(lp.c @ x)
    # dual objective: y.b plus bound terms of the reduced costs
    dual_obj = float(y @ lp.rhs + (lp.c - A.T @ y) @ np.where(at_hi & ~at_lo, lp.hi,
                                                             np.where(at_lo, lp.lo, x)))
    sd = abs(primal_obj - dual_obj) / (cscale * (1.0 + abs(primal_obj) / cscale))
    if sd > tol:
        out["strong_duality"] = sd
    return out


def dump_lp(lp: LinearProgram) -> str:
    """Human readable listing: objective, one line per row, then bounds.

    Format::

        min: 3 x0 - 2 x1 + 5
        r0: x0 + x1 <= 4
        bounds: 0 <= x0 <= 3
        int: x0
    """
    def name(j):
        return (lp.col_names[j] if lp.col_names and lp.col_names[j] is not None else f"x{j}")

    def expr(coefs):
        parts = []
        for j, a in coefs:
            sign = "-" if a < 0 else "+"
            parts.append(f"{sign} {abs(a):.12g} {name(j)}")
        s = " ".join(parts)
        return s[2:] if s.startswith("+ ") else s

    lines = ["min: " + expr([(j, a) for j, a in enumerate(lp.c) if a != 0.0])
             + (f" + {lp.constant:.12g}" if lp.constant else "")]
    A = lp.A.tocsr()
    for i in range(lp.n_rows):
        lo_, hi_ = A.indptr[i], A.indptr[i + 1]
        rname = lp.row_names[i] if lp.row_names and lp.row_names[i] is not None else f"r{i}"
        coefs = list(zip(A.indices[lo_:hi_], A.data[lo_:hi_]))
        lines.append(f"{rname}: {expr(coefs) or '0'} {lp.sense[i]} {lp.rhs[i]:.12g}")
    for j in range(lp.n_cols):
        lines.append(f"bounds: {lp.lo[j]:.12g} <= {name(j)} <= {lp.hi[j]:.12g}")
    ints = [name(j) for j in range(lp.n_cols) if lp.integer[j]]
    if ints:
        lines.append("int: " + " ".join(ints))
    return "\n".join(lines) + "\n"
