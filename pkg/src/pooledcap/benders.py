"""Multi-cut Benders decomposition for one sub-horizon.

The restricted master problem (RMP) holds the integer deployment ``S``,
relocations ``R`` and one cost variable ``q`` per (scenario, operational
period, cut unit).  The hubs of a cell that touch a pooling arc form one
unit; every other hub is a unit of its own, since nothing couples it to the
rest of the cell.  Each iteration solves all recourse subproblems at the master
deployment and adds one optimality cut per violated ``q``.  Optional
accelerations: Pareto-optimal (Magnanti-Wong) cuts with a moving core point,
and the epsilon-optimal master schedule that only asks the RMP for a
solution improving the incumbent by ``eps_hat``.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .lp import EQ, GE, INFEASIBLE, LinearProgram, SolverError, solve_mip
from .model import (DeploymentPlan, Network, Parameters, ScenarioSet, location_caps,
                    ops_of_period, relocation_caps)
from .recourse import BlockResult, RecourseModel

# wall times stay in ``BendersState.log`` so the CSV log is reproducible
LOG_COLUMNS = ["iteration", "lower_bound", "upper_bound", "gap", "eps_hat", "cuts_added",
               "rmp_status"]


@dataclass
class Cut:
    """``q[owner] >= constant + sum_l coef_l * S_l(period)``.

    ``owner`` is ``(unit, k, scenario)`` with ``unit`` an index into
    :func:`cut_units` and ``k`` the operational-period position inside the
    sub-horizon.
    """

    owner: tuple
    period: int                 # position in the sub-horizon
    constant: float
    hubs: np.ndarray            # global hub indices of the cell
    coef: np.ndarray
    iteration: int
    pareto: bool = False

    def value(self, hub_S: np.ndarray) -> float:
        """Cut right-hand side at hub levels ``hub_S`` (one period, all hubs)."""
        return float(self.constant + self.coef @ np.asarray(hub_S)[self.hubs])


@dataclass
class BendersOptions:
    pareto: bool = True
    epsilon_method: bool = True
    epsilon: Optional[float] = None        # defaults to Parameters.epsilon
    eps_hat_start: Optional[float] = None  # defaults to Parameters.eps_hat_start
    max_iter: int = 200
    time_limit: Optional[float] = None
    backend: str = "highs"
    verify: bool = True
    log_path: Optional[str] = None


@dataclass
class BendersState:
    iteration: int = 0
    lower: float = -np.inf
    upper: float = np.inf
    eps_hat: Optional[float] = None
    S: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    cuts: list = field(default_factory=list)
    log: list = field(default_factory=list)
    lower_history: list = field(default_factory=list)
    upper_history: list = field(default_factory=list)
    certified: bool = False
    status: str = "running"
    wall_time: float = 0.0
    lp_solves: int = 0
    best_recourse: Optional[BlockResult] = None
    core: Optional[np.ndarray] = None

    @property
    def gap(self) -> float:
        return relative_gap(self.upper, self.lower)


def relative_gap(ub: float, lb: float) -> float:
    """``(UB - LB) / |LB|``; zero once the bounds meet."""
    if not np.isfinite(ub) or not np.isfinite(lb):
        return np.inf
    diff = ub - lb
    if diff <= 1e-9 * max(1.0, abs(ub)):
        return 0.0
    return diff / max(abs(lb), 1e-9)


@dataclass(frozen=True)
class CutUnit:
    """Hubs sharing one ``q`` variable.

    The hubs of a cell that touch a pooling arc form one unit together with
    the cell's sync rows.  A hub without pooling arcs only meets its own
    volume row, so its recourse separates and gets a unit of its own; a cell
    where every hub pools is exactly one unit.
    """

    cell: int
    hubs: np.ndarray        # global hub indices
    pooled: bool


def cut_units(model: RecourseModel) -> list:
    units = []
    for t in model.templates:
        touched = np.zeros(t.n_hubs, dtype=bool)
        touched[t.arc_origin] = True
        touched[t.arc_dest] = True
        if touched.any():
            units.append(CutUnit(t.index, t.hubs[touched], True))
        for h in t.hubs[~touched]:
            units.append(CutUnit(t.index, np.array([h]), False))
    return units


def unit_values(res: BlockResult, model: RecourseModel, units: list) -> np.ndarray:
    """Subproblem values split by unit, shape ``(n_scen, K, n_units)``."""
    W, K = model.n_scen, model.K
    out = np.zeros((W, K, len(units)))
    lone = np.zeros(res.values.shape)
    for u, unit in enumerate(units):
        if not unit.pooled:
            out[:, :, u] = model.p.shortfall_penalty * res.shortfall[:, :, unit.hubs[0]]
            lone[:, :, unit.cell] += out[:, :, u]
    for u, unit in enumerate(units):
        if unit.pooled:
            out[:, :, u] = res.values[:, :, unit.cell] - lone[:, :, unit.cell]
    return out


def make_cuts(res: BlockResult, model: RecourseModel, op_period: np.ndarray, iteration: int,
              pareto: bool = False, units: Optional[list] = None) -> list:
    """One cut per (unit, k, scenario) from the row duals in ``res``.

    A cell's dual solution restricted to the rows of one unit is dual
    feasible for that unit's part of the subproblem, so each piece is a valid
    cut on its own and the pieces add up to the cell cut.
    """
    units = cut_units(model) if units is None else units
    v = model.p.module_volume
    W, K = model.n_scen, model.K
    lone_const = np.zeros(res.alpha.shape)
    consts = np.zeros((W, K, len(units)))
    for u, unit in enumerate(units):
        if not unit.pooled:
            h = unit.hubs[0]
            consts[:, :, u] = res.pi[:, :, h] * model.volume[:, :, h]
            lone_const[:, :, unit.cell] += consts[:, :, u]
    for u, unit in enumerate(units):
        if unit.pooled:
            consts[:, :, u] = res.alpha[:, :, unit.cell] - lone_const[:, :, unit.cell]
    cuts = []
    for u, unit in enumerate(units):
        for k in range(K):
            for w in range(W):
                coef = -v * res.pi[w, k, unit.hubs]
                cuts.append(Cut((u, k, w), int(op_period[k]), float(consts[w, k, u]),
                                unit.hubs, coef, iteration, pareto))
    return cuts


def printed_cut_constant(model: RecourseModel, res: BlockResult, cell: int, k: int, w: int) -> float:
    """Cut constant assembled term by term from volume, rider and courier rows.

    Reads the courier term with ``rho^P + rho^D`` (pickups plus deliveries).
    Agrees with the generic ``y.b(0)`` constant because the compact
    subproblem has no other rows with nonzero right-hand side.
    """
    t = model.templates[cell]
    D = model.volume[w, k, t.hubs]
    const = float(res.pi[w, k, t.hubs] @ D)
    if t.has_rider_row:
        const += res.mu[w, k, cell] * model.rider_slack[w, k, cell]
        hubs = t.hubs[t.courier_rows]
        const += float(res.lam[w, k, hubs] @ model.courier_slack[w, k, hubs])
    return const


def initial_core_point(net: Network, p: Parameters, n_periods: int) -> np.ndarray:
    """Interior starting point: hubs at ``min(S_bar/2, I_0/|L u W|)``, depots share the rest."""
    nL = len(net.locations)
    S0 = np.zeros((n_periods, nL))
    hub_loc = net.hub_loc
    S0[:, hub_loc] = np.minimum(net.max_modules[hub_loc] / 2.0, p.total_modules / nL)
    return _depot_remainder(net, p, S0)


def _depot_remainder(net: Network, p: Parameters, S0: np.ndarray) -> np.ndarray:
    depots = net.depot_loc
    rest = p.total_modules - S0[:, net.hub_loc].sum(axis=1)
    S0[:, depots] = (rest / len(depots))[:, None]
    return S0


def update_core_point(net: Network, p: Parameters, S0: np.ndarray, S_hat: np.ndarray) -> np.ndarray:
    """Halfway step toward the master solution for hubs; depots keep the balance."""
    S1 = np.array(S0, dtype=float, copy=True)
    hubs = net.hub_loc
    S1[:, hubs] = (S0[:, hubs] + np.asarray(S_hat)[:, hubs]) / 2.0
    return _depot_remainder(net, p, S1)


class MasterProblem:
    """RMP over ``S[t, loc]``, ``R[t, arc]`` and ``q[unit, k, w]``."""

    def __init__(self, net: Network, p: Parameters, scen: ScenarioSet, n_periods: int,
                 K: int, initial: Optional[np.ndarray], n_units: Optional[int] = None):
        self.net, self.p = net, p
        nL, nA = len(net.locations), len(net.relocation_arcs)
        C = len(net.cells) if n_units is None else n_units
        W = scen.n_scenarios
        self.T, self.K, self.W, self.C = n_periods, K, W, C
        self.nS = n_periods * nL
        self.nR = n_periods * nA
        self.nq = C * K * W
        caps = location_caps(net, p)
        # q is carried in units of q_scale dollars to keep cut rows well conditioned
        self.q_scale = max(1.0, p.shortfall_penalty * p.module_volume / 10.0)
        self.c = np.concatenate([np.tile(net.holding_costs, n_periods),
                                 np.tile(net.arc_costs, n_periods),
                                 self.q_scale * np.tile(np.repeat(scen.probabilities[None, :], K,
                                                                  axis=0).ravel(), C)])
        self.lo = np.zeros(self.c.size)
        self.hi = np.concatenate([np.tile(caps, n_periods).astype(float),
                                  np.tile(relocation_caps(net, p), n_periods), np.full(self.nq, np.inf)])
        self.integer = np.concatenate([np.ones(self.nS + self.nR, bool), np.zeros(self.nq, bool)])
        rows, cols, vals, rhs = [], [], [], []
        ends = net.arc_ends
        r = 0
        for t in range(n_periods):
            if t > 0 or initial is not None:
                for j in range(nL):
                    rows.append(r); cols.append(t * nL + j); vals.append(1.0)
                    if t > 0:
                        rows.append(r); cols.append((t - 1) * nL + j); vals.append(-1.0)
                    for a in np.nonzero(ends[:, 1] == j)[0]:
                        rows.append(r); cols.append(self.nS + t * nA + a); vals.append(-1.0)
                    for a in np.nonzero(ends[:, 0] == j)[0]:
                        rows.append(r); cols.append(self.nS + t * nA + a); vals.append(1.0)
                    rhs.append(float(initial[j]) if t == 0 else 0.0)
                    r += 1
            for j in range(nL):
                rows.append(r); cols.append(t * nL + j); vals.append(1.0)
            rhs.append(float(p.total_modules))
            r += 1
        self.base = sp.csr_matrix((vals, (rows, cols)), shape=(r, self.c.size))
        self.base_rhs = np.array(rhs)
        self.cut_rows = []

    def q_col(self, owner) -> int:
        c, k, w = owner
        return self.nS + self.nR + (c * self.K + k) * self.W + w

    def S_cols(self, t: int, locs) -> np.ndarray:
        return t * len(self.net.locations) + np.asarray(locs, dtype=int)

    def add_cut(self, cut: Cut):
        hub_loc = self.net.hub_loc
        cols = np.append(self.S_cols(cut.period, hub_loc[cut.hubs]), self.q_col(cut.owner))
        vals = np.append(-cut.coef, self.q_scale)
        keep = vals != 0
        self.cut_rows.append((cut.owner, cut.iteration, cols[keep], vals[keep], cut.constant))

    def program(self) -> LinearProgram:
        # deterministic row order regardless of generation order
        rows = sorted(self.cut_rows, key=lambda r: (r[0], r[1]))
        if rows:
            ri = np.concatenate([np.full(len(r[2]), i) for i, r in enumerate(rows)])
            ci = np.concatenate([r[2] for r in rows])
            vi = np.concatenate([r[3] for r in rows])
            cuts = sp.csr_matrix((vi, (ri, ci)), shape=(len(rows), self.c.size))
            A = sp.vstack([self.base, cuts], format="csr")
            rhs = np.concatenate([self.base_rhs, [r[4] for r in rows]])
        else:
            A, rhs = self.base, self.base_rhs
        sense = np.array([EQ] * self.base.shape[0] + [GE] * len(rows), dtype=object)
        return LinearProgram(self.c, A, sense, rhs, self.lo, self.hi, self.integer)

    def split(self, x: np.ndarray):
        nL = len(self.net.locations)
        nA = len(self.net.relocation_arcs)
        S = np.round(x[:self.nS]).reshape(self.T, nL)
        R = np.round(x[self.nS:self.nS + self.nR]).reshape(self.T, nA)
        q = self.q_scale * x[self.nS + self.nR:].reshape(self.C, self.K, self.W)
        return S, R, q


def _write_log(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow([r[c] for c in LOG_COLUMNS])


def solve_benders(net: Network, params: Parameters, scen: ScenarioSet, periods: Sequence[int],
                  initial: Optional[np.ndarray] = None,
                  options: Optional[BendersOptions] = None):
    """Solve the sub-horizon ``periods``; returns ``(DeploymentPlan, BendersState)``.

    ``initial`` is ``S(t-1)`` for the first period, ``None`` for a free
    initial placement.  The returned plan is the best incumbent; its
    ``certified`` flag says whether ``(UB - LB)/LB <= epsilon`` was proven.
    """
    opt = options or BendersOptions()
    p = params
    eps = p.epsilon if opt.epsilon is None else opt.epsilon
    periods = list(periods)
    T = len(periods)
    ops = [k for t in periods for k in ops_of_period(p, t)]
    op_period = np.repeat(np.arange(T), p.ops_per_period)
    model = RecourseModel(net, p, scen, ops, backend=opt.backend, verify=opt.verify)
    units = cut_units(model)
    master = MasterProblem(net, p, scen, T, len(ops), initial, len(units))
    state = BendersState()
    state.eps_hat = ((p.eps_hat_start if opt.eps_hat_start is None else opt.eps_hat_start)
                     if opt.epsilon_method else None)
    if state.eps_hat is not None:
        state.eps_hat = max(state.eps_hat, eps)
    state.core = initial_core_point(net, p, T) if opt.pareto else None
    hub_loc = net.hub_loc
    start = time.perf_counter()

    def record(status, added):
        state.lower_history.append(state.lower)
        state.upper_history.append(state.upper)
        state.log.append({"iteration": state.iteration, "lower_bound": state.lower,
                          "upper_bound": state.upper, "gap": state.gap,
                          "eps_hat": "" if state.eps_hat is None else state.eps_hat,
                          "cuts_added": added, "rmp_status": status,
                          "wall_time": time.perf_counter() - start})

    seen = set()
    while True:
        if state.iteration >= opt.max_iter:
            state.status = "iteration_limit"
            break
        if (opt.time_limit is not None and state.S is not None
                and time.perf_counter() - start > opt.time_limit):
            state.status = "time_limit"
            break
        state.iteration += 1
        lp = master.program()
        gap = eps / 10 if state.eps_hat is None else state.eps_hat / 2
        remaining = None
        if opt.time_limit is not None:
            remaining = max(opt.time_limit - (time.perf_counter() - start), 1.0)
        sol = solve_mip(lp, gap=gap, backend=opt.backend, time_limit=remaining)
        if sol.status == INFEASIBLE:
            raise SolverError("restricted master problem is infeasible")
        if sol.x is None:
            if remaining is not None and state.S is not None:
                state.iteration -= 1
                state.status = "time_limit"
                break
            raise SolverError(f"restricted master problem returned {sol.status}")
        S, R, q = master.split(sol.x)
        bound = sol.bound if sol.bound is not None else sol.objective
        state.lower = max(state.lower, bound)
        rmp_status = sol.status
        if state.eps_hat is not None and np.isfinite(state.upper):
            # improvement target read off the master bound: nothing beats UB/(1+eps_hat)
            target = state.upper / (1.0 + state.eps_hat)
            if bound >= target - 1e-9 * max(1.0, abs(target)):
                rmp_status = "no_improvement"
                if state.eps_hat <= eps * (1 + 1e-12):
                    state.certified = True
                    state.status = "converged"
                    record(rmp_status, 0)
                    break
                state.eps_hat = max(state.eps_hat / 2.0, eps)
        hub_S = S[op_period][:, hub_loc]
        res = model.solve(hub_S)
        state.lp_solves += res.lp_solves
        holding = float((S @ net.holding_costs).sum())
        relocation = float((R @ net.arc_costs).sum())
        expected = float(scen.probabilities @ res.values.sum(axis=(1, 2)))
        ub = holding + relocation + expected
        if ub < state.upper - 1e-12 * max(1.0, abs(ub)):
            state.upper = ub
            state.S, state.R = S, R
            state.best_recourse = res
        cut_res = res
        if opt.pareto:
            state.core = update_core_point(net, p, state.core, S)
            core_hub = state.core[op_period][:, hub_loc]
            cut_res = model.solve(hub_S, pareto=(core_hub, res))
            state.lp_solves += cut_res.lp_solves
        added = 0
        true_vals = unit_values(res, model, units)
        for cut in make_cuts(cut_res, model, op_period, state.iteration, pareto=opt.pareto,
                             units=units):
            c, k, w = cut.owner
            true_val = true_vals[w, k, c]
            if true_val <= q[c, k, w] + 1e-7 * max(1.0, abs(true_val)):
                continue
            if not np.any(cut.coef) and cut.constant <= 1e-12:
                continue
            key = (cut.owner, cut.constant, cut.coef.tobytes())
            if key in seen:
                continue
            seen.add(key)
            master.add_cut(cut)
            state.cuts.append(cut)
            added += 1
        record(rmp_status, added)
        if state.gap <= eps:
            state.certified = True
            state.status = "converged"
            break
        if added == 0:
            if state.eps_hat is not None and state.eps_hat > eps:
                state.eps_hat = max(state.eps_hat / 2.0, eps)
                continue
            # master already prices every subproblem exactly at its own optimum
            state.status = "stalled"
            state.certified = state.gap <= eps
            break
    state.wall_time = time.perf_counter() - start
    if opt.log_path:
        _write_log(opt.log_path, state.log)
    if state.S is None:
        raise SolverError(f"Benders stopped ({state.status}) before finding a solution")
    res = state.best_recourse
    holding = float((state.S @ net.holding_costs).sum())
    relocation = float((state.R @ net.arc_costs).sum())
    expected = float(scen.probabilities @ res.values.sum(axis=(1, 2)))
    plan = DeploymentPlan(periods, state.S, state.R, holding, relocation, expected,
                          certified=state.certified)
    return plan, state
