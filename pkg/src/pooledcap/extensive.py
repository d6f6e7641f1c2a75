"""Deterministic equivalent of the two-stage model over a sub-horizon.

Every first- and second-stage variable gets its own column, including all
four detour counts, so this model doubles as an independent check on the
compact subproblems used by the decomposition.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import approx
from .lp import EQ, GE, LE, LinearProgram, LpSolution, SolverError, solve_lp, solve_mip
from .model import (DeploymentPlan, Network, Parameters, RecourseSolution, ScenarioSet,
                    location_caps, ops_of_period, relocation_caps)
from .recourse import sync_slack


@dataclass
class ModelIndex:
    """Column and row positions of every variable and constraint family.

    Column arrays: ``S[t, loc]``, ``R[t, arc]``; recourse arrays are indexed
    ``[w, k, ...]`` with ``k`` running over ``ops`` (all operational periods
    of the sub-horizon).  Row arrays use ``-1`` where a row is absent.
    """

    periods: list
    ops: list
    op_period: np.ndarray        # position in ``periods`` of each op
    S: np.ndarray
    R: np.ndarray
    P: np.ndarray
    Z: np.ndarray
    nRa: np.ndarray
    nRLC: np.ndarray
    nCa: np.ndarray
    nCl: np.ndarray
    balance: np.ndarray          # [t, loc]
    inventory: np.ndarray        # [t]
    volume: np.ndarray           # [w, k, hub]
    rider_sync: np.ndarray       # [w, k, cell]
    courier_sync: np.ndarray     # [w, k, hub]
    cell_detours: np.ndarray     # [w, k, cell]   n^R_LC >= sum n^R_a
    rider_link: np.ndarray       # [w, k, arc]    v^R n^R_a >= P_a
    hub_detours: np.ndarray      # [w, k, hub]    n^C_l >= sum n^C_a
    courier_link: np.ndarray     # [w, k, arc]    v^C n^C_a >= P_a
    n_cols: int = 0

    def first_stage_columns(self) -> np.ndarray:
        return np.concatenate([self.S.ravel(), self.R.ravel()])


class _Builder:
    def __init__(self):
        self.c, self.lo, self.hi, self.integer = [], [], [], []
        self.rows, self.cols, self.vals = [], [], []
        self.sense, self.rhs = [], []

    def vars(self, shape, cost=0.0, lo=0.0, hi=np.inf, integer=False):
        n = int(np.prod(shape))
        start = len(self.c)
        self.c.extend(np.broadcast_to(np.asarray(cost, float), shape).ravel().tolist())
        self.lo.extend(np.broadcast_to(np.asarray(lo, float), shape).ravel().tolist())
        self.hi.extend(np.broadcast_to(np.asarray(hi, float), shape).ravel().tolist())
        self.integer.extend([integer] * n)
        return np.arange(start, start + n).reshape(shape)

    def row(self, terms, sense, rhs):
        r = len(self.sense)
        for col, val in terms:
            self.rows.append(r)
            self.cols.append(int(col))
            self.vals.append(float(val))
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        return r

    def build(self, constant=0.0):
        n = len(self.c)
        A = sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.sense), n))
        return LinearProgram(np.array(self.c), A, np.array(self.sense, dtype=object),
                             np.array(self.rhs), np.array(self.lo), np.array(self.hi),
                             np.array(self.integer), constant)


def build_extensive(net: Network, params: Parameters, scen: ScenarioSet, periods: Sequence[int],
                    initial: Optional[np.ndarray] = None, fixed_S: Optional[np.ndarray] = None):
    """Deterministic equivalent over tactical ``periods`` (consecutive).

    ``initial`` gives ``S(t-1)`` for the first period; ``None`` drops the
    balance rows of that period (free initial placement).  ``fixed_S`` pins
    the module levels ``S[t, loc]`` through column bounds.
    """
    p = params
    periods = list(periods)
    if any(b - a != 1 for a, b in zip(periods, periods[1:])):
        raise ValueError("periods must be consecutive")
    nL, nA, nP = len(net.locations), len(net.relocation_arcs), len(net.pooling_arcs)
    H, C, W = len(net.hubs), len(net.cells), scen.n_scenarios
    if initial is not None and np.asarray(initial).shape != (nL,):
        raise ValueError(f"initial deployment needs {nL} entries")
    ops = [k for t in periods for k in ops_of_period(p, t)]
    if max(ops) >= scen.n_ops:
        raise ValueError("scenarios do not cover the requested periods")
    op_period = np.repeat(np.arange(len(periods)), p.ops_per_period)
    K = len(ops)
    T = len(periods)
    phi = scen.probabilities

    b = _Builder()
    caps = location_caps(net, p)
    S = b.vars((T, nL), cost=np.broadcast_to(net.holding_costs, (T, nL)), hi=caps, integer=True)
    R = b.vars((T, nA), cost=np.broadcast_to(net.arc_costs, (T, nA)),
               hi=np.broadcast_to(relocation_caps(net, p), (T, nA)),
               integer=True)
    if fixed_S is not None:
        fixed_S = np.asarray(fixed_S, dtype=float).reshape(T, nL)
        for t in range(T):
            for j in range(nL):
                b.lo[S[t, j]] = b.hi[S[t, j]] = fixed_S[t, j]

    rider_cost = np.array([approx.rider_detour_cost(c, p) for c in net.cells])
    rider_time = np.array([approx.rider_detour_time(c, p) for c in net.cells])
    arc_cost = np.array([approx.courier_arc_cost(a.distance, p) for a in net.pooling_arcs])
    arc_time = np.array([approx.courier_arc_time(a.distance, p) for a in net.pooling_arcs])
    wshape = (W, K)
    P = b.vars((W, K, nP))
    Z = b.vars((W, K, H), cost=(phi[:, None, None] * p.shortfall_penalty) * np.ones((W, K, H)))
    nRa = b.vars((W, K, nP))
    nRLC = b.vars((W, K, C), cost=phi[:, None, None] * rider_cost[None, None, :] * np.ones((W, K, C)))
    nCa = b.vars((W, K, nP), cost=phi[:, None, None] * arc_cost[None, None, :] * np.ones((W, K, nP)))
    nCl = b.vars((W, K, H))

    balance = np.full((T, nL), -1)
    inventory = np.full(T, -1)
    ends = net.arc_ends
    for t in range(T):
        if t > 0 or initial is not None:
            for j in range(nL):
                terms = [(S[t, j], 1.0)]
                if t > 0:
                    terms.append((S[t - 1, j], -1.0))
                terms += [(R[t, a], -1.0) for a in np.nonzero(ends[:, 1] == j)[0]]
                terms += [(R[t, a], 1.0) for a in np.nonzero(ends[:, 0] == j)[0]]
                rhs = float(initial[j]) if t == 0 else 0.0
                balance[t, j] = b.row(terms, EQ, rhs)
        inventory[t] = b.row([(S[t, j], 1.0) for j in range(nL)], EQ, p.total_modules)

    rslack, cslack = sync_slack(net, p, scen, ops)
    hub_loc = net.hub_loc
    hub_of = net.hub_index
    origin = np.array([hub_of[a.origin] for a in net.pooling_arcs], dtype=int)
    dest = np.array([hub_of[a.dest] for a in net.pooling_arcs], dtype=int)
    arc_cell = np.array([net.cell_index[net.hubs[o].local_cell] for o in origin], dtype=int)
    volume = np.full((W, K, H), -1)
    rsync = np.full((W, K, C), -1)
    csync = np.full((W, K, H), -1)
    cdet = np.full((W, K, C), -1)
    rlink = np.full((W, K, nP), -1)
    hdet = np.full((W, K, H), -1)
    clink = np.full((W, K, nP), -1)
    D = scen.volume[:, ops]
    for w in range(W):
        for k in range(K):
            t = op_period[k]
            for h in range(H):
                terms = [(S[t, hub_loc[h]], p.module_volume), (Z[w, k, h], 1.0)]
                terms += [(P[w, k, a], 1.0) for a in np.nonzero(dest == h)[0]]
                terms += [(P[w, k, a], -1.0) for a in np.nonzero(origin == h)[0]]
                volume[w, k, h] = b.row(terms, GE, D[w, k, h])
                out = np.nonzero(origin == h)[0]
                csync[w, k, h] = b.row([(nCa[w, k, a], arc_time[a]) for a in out], LE,
                                       cslack[w, k, h])
                hdet[w, k, h] = b.row([(nCl[w, k, h], 1.0)] + [(nCa[w, k, a], -1.0) for a in out],
                                      GE, 0.0)
            for c in range(C):
                rsync[w, k, c] = b.row([(nRLC[w, k, c], rider_time[c])], LE, rslack[w, k, c])
                members = np.nonzero(arc_cell == c)[0]
                cdet[w, k, c] = b.row([(nRLC[w, k, c], 1.0)]
                                      + [(nRa[w, k, a], -1.0) for a in members], GE, 0.0)
            for a in range(nP):
                rlink[w, k, a] = b.row([(nRa[w, k, a], p.rider_volume), (P[w, k, a], -1.0)], GE, 0.0)
                clink[w, k, a] = b.row([(nCa[w, k, a], p.courier_volume), (P[w, k, a], -1.0)], GE,
                                       0.0)
    lp = b.build()
    idx = ModelIndex(periods, ops, op_period, S, R, P, Z, nRa, nRLC, nCa, nCl, balance, inventory,
                     volume, rsync, csync, cdet, rlink, hdet, clink, lp.n_cols)
    return lp, idx


def first_stage_cost(net: Network, S: np.ndarray, R: np.ndarray):
    S = np.atleast_2d(S)
    R = np.atleast_2d(R)
    return float((S @ net.holding_costs).sum()), float((R @ net.arc_costs).sum())


def unpack(net: Network, params: Parameters, scen: ScenarioSet, idx: ModelIndex,
           sol: LpSolution):
    """Plan and recourse solution from an extensive-form solution vector."""
    x = sol.x
    S = np.round(x[idx.S]) if sol.x is not None else None
    R = np.round(x[idx.R])
    holding, relocation = first_stage_cost(net, S, R)
    P, Z = x[idx.P], x[idx.Z]
    nRa, nRLC, nCa, nCl = x[idx.nRa], x[idx.nRLC], x[idx.nCa], x[idx.nCl]
    p = params
    rider_cost = np.array([approx.rider_detour_cost(c, p) for c in net.cells])
    arc_cost = np.array([approx.courier_arc_cost(a.distance, p) for a in net.pooling_arcs])
    origin = np.array([net.hub_index[a.origin] for a in net.pooling_arcs], dtype=int)
    courier_marg = np.zeros(Z.shape)
    if len(origin):
        np.add.at(courier_marg.transpose(2, 0, 1), origin, (nCa * arc_cost).transpose(2, 0, 1))
    rider_marg = nRLC * rider_cost
    rslack, cslack = sync_slack(net, p, scen, idx.ops)
    rider_time = np.array([approx.rider_detour_time(c, p) for c in net.cells])
    arc_time = np.array([approx.courier_arc_time(a.distance, p) for a in net.pooling_arcs])
    rs = rslack - nRLC * rider_time
    cs = cslack.copy()
    if len(origin):
        np.subtract.at(cs.transpose(2, 0, 1), origin, (nCa * arc_time).transpose(2, 0, 1))
    duals = {}
    if sol.duals is not None:
        duals = {"pi": sol.duals[idx.volume], "mu": sol.duals[idx.rider_sync],
                 "lambda": sol.duals[idx.courier_sync]}
    rec = RecourseSolution(list(idx.ops), P, Z, nRa, nRLC, nCa, nCl, rider_marg, courier_marg,
                           rs, cs, duals)
    per_op = (rider_marg.sum(axis=2) + courier_marg.sum(axis=2)
              + p.shortfall_penalty * Z.sum(axis=2))
    recourse = float(scen.probabilities @ per_op.sum(axis=1))
    plan = DeploymentPlan(list(idx.periods), S, R, holding, relocation, recourse,
                          certified=True)
    return plan, rec


def solve_extensive(net: Network, params: Parameters, scen: ScenarioSet, periods: Sequence[int],
                    initial: Optional[np.ndarray] = None, gap: Optional[float] = None,
                    backend: str = "highs", fixed_S: Optional[np.ndarray] = None):
    """Solve the deterministic equivalent; returns ``(plan, recourse, objective)``.

    With ``fixed_S`` the first stage is pinned and only an LP is solved.
    """
    lp, idx = build_extensive(net, params, scen, periods, initial, fixed_S)
    gap = params.epsilon if gap is None else gap
    if fixed_S is not None:
        sol = solve_lp(lp.relaxed(), backend=backend)
    else:
        sol = solve_mip(lp, gap=gap, backend=backend)
    if not sol.optimal:
        raise SolverError(f"extensive form returned {sol.status}")
    plan, rec = unpack(net, params, scen, idx, sol)
    plan.certified = sol.gap is None or sol.gap <= gap + 1e-12
    return plan, rec, sol.objective
