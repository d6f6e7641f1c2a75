"""Second-stage (recourse) problems per (local cell, operational period, scenario).

At an optimum every detour count sits at its lower bound, so the subproblem
is solved in a compact form over pooled volumes ``P_a`` and shortfalls
``Z_l`` only:

* volume rows      ``sum_in P - sum_out P + Z_l >= D_l - v S_l``
* rider sync       ``sum_a (t^R / v^R) P_a <= m^R Delta - T^R_nominal``
* courier sync     ``sum_{a out of l} (t^C_a / v^C) P_a <= m^C_l Delta - T^C_l,nominal``

with cost ``(c^R / v^R + c^C_a / v^C)`` per unit of ``P_a`` and ``p`` per unit
of ``Z``.  The optimal value and the volume-row duals coincide with the full
model that keeps every detour count as a column.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import approx
from .lp import GE, LE, LinearProgram, SolverError, solve_lp
from .model import Network, Parameters, RecourseSolution, ScenarioSet

# negative nominal sync slack above this is treated as rounding noise
SLACK_NOISE = 1e-6


@dataclass
class CellTemplate:
    """Constraint template of one cell's subproblem (one block)."""

    index: int
    hubs: np.ndarray            # global hub indices
    arcs: np.ndarray            # global pooling-arc indices
    courier_rows: np.ndarray    # local hub positions with outgoing arcs
    A: sp.csr_matrix
    sense: np.ndarray
    cost: np.ndarray
    rider_per_volume: float     # rider hours per unit pooled volume
    courier_per_volume: np.ndarray  # courier hours per unit pooled volume, per arc
    arc_origin: np.ndarray      # local hub position of each arc's origin
    arc_dest: np.ndarray

    @property
    def n_hubs(self) -> int:
        return self.hubs.size

    @property
    def n_arcs(self) -> int:
        return self.arcs.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_cols(self) -> int:
        return self.A.shape[1]

    @property
    def has_rider_row(self) -> bool:
        return self.n_arcs > 0


def cell_templates(net: Network, p: Parameters) -> list:
    hub_pos = net.hub_index
    out = []
    for c, (cell, members) in enumerate(zip(net.cells, net.cell_hubs)):
        members = np.asarray(members, dtype=int)
        local = {int(h): i for i, h in enumerate(members)}
        arcs = np.array([k for k, a in enumerate(net.pooling_arcs)
                         if hub_pos[a.origin] in local], dtype=int)
        nh, na = members.size, arcs.size
        orig = np.array([local[hub_pos[net.pooling_arcs[k].origin]] for k in arcs], dtype=int)
        dest = np.array([local[hub_pos[net.pooling_arcs[k].dest]] for k in arcs], dtype=int)
        dist = np.array([net.pooling_arcs[k].distance for k in arcs])
        rider_t = approx.rider_detour_time(cell, p) / p.rider_volume
        courier_t = np.array([approx.courier_arc_time(d, p) for d in dist]) / p.courier_volume
        courier_rows = np.unique(orig)

        rows, cols, vals = [], [], []
        for j in range(na):
            rows += [dest[j], orig[j]]
            cols += [j, j]
            vals += [1.0, -1.0]
        for i in range(nh):
            rows.append(i)
            cols.append(na + i)
            vals.append(1.0)
        sense = [GE] * nh
        if na:
            rows += [nh] * na
            cols += list(range(na))
            vals += [rider_t] * na
            sense.append(LE)
            base = nh + 1
            for r, i in enumerate(courier_rows):
                for j in np.nonzero(orig == i)[0]:
                    rows.append(base + r)
                    cols.append(j)
                    vals.append(courier_t[j])
                sense.append(LE)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(len(sense), na + nh))
        cost = np.concatenate([
            approx.rider_detour_cost(cell, p) / p.rider_volume
            + np.array([approx.courier_arc_cost(d, p) for d in dist]) / p.courier_volume,
            np.full(nh, p.shortfall_penalty)])
        out.append(CellTemplate(c, members, arcs, courier_rows, A, np.array(sense, dtype=object),
                                cost, rider_t, courier_t, orig, dest))
    return out


# --------------------------------------------------------------- sync right-hand sides

def nominal_rider_time(net: Network, p: Parameters, scen: ScenarioSet, ops) -> np.ndarray:
    """Zero-detour rider hours, shape ``(n_scenarios, len(ops), n_cells)``."""
    ops = np.asarray(ops, dtype=int)
    stops = scen.stops[:, ops]
    m = scen.riders[:, ops]
    out = np.zeros(m.shape)
    for c, (cell, members) in enumerate(zip(net.cells, net.cell_hubs)):
        load = stops[:, :, members].sum(axis=2)
        mc = m[:, :, c]
        visits = np.where(mc > 0, cell.n_hubs, 0)
        out[:, :, c] = (mc * approx.rider_fixed_time(cell, p)
                        + visits * approx.rider_detour_time(cell, p) + load * p.rider_handling_time)
    return out


def hub_densities(net: Network) -> np.ndarray:
    dens = np.empty(len(net.hubs))
    for cell, members in zip(net.cells, net.cell_hubs):
        dens[np.asarray(members, dtype=int)] = cell.hub_density
    return dens


def nominal_courier_time(net: Network, p: Parameters, scen: ScenarioSet, ops) -> np.ndarray:
    per_stop = np.array([approx.courier_stop_time(d, p) for d in hub_densities(net)])
    return scen.stops[:, np.asarray(ops, dtype=int)] * per_stop


def _clean_slack(slack: np.ndarray, what: str) -> np.ndarray:
    if np.any(slack < -SLACK_NOISE * np.maximum(1.0, np.abs(slack))):
        raise SolverError(f"{what}: nominal operations exceed the workforce "
                          f"(min slack {slack.min():.3g} h)")
    return np.maximum(slack, 0.0)


def sync_slack(net: Network, p: Parameters, scen: ScenarioSet, ops):
    """Nominal rider slack ``(n_scen, K, n_cells)`` and courier slack ``(n_scen, K, n_hubs)``."""
    ops = np.asarray(ops, dtype=int)
    rider = scen.riders[:, ops] * p.period_length - nominal_rider_time(net, p, scen, ops)
    courier = scen.couriers[:, ops] * p.period_length - nominal_courier_time(net, p, scen, ops)
    return _clean_slack(rider, "rider sync"), _clean_slack(courier, "courier sync")


# ------------------------------------------------------------------- batched solve

@dataclass
class BlockResult:
    """Subproblem results for every (scenario, operational period, cell).

    ``values`` has shape ``(n_scen, K, n_cells)``; duals follow the row
    families: ``pi`` per hub (volume rows), ``mu`` per cell (rider sync),
    ``lam`` per hub (courier sync).  Duals use the convention ``d obj / d rhs``.
    """

    ops: list
    values: np.ndarray
    pi: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    pooled: np.ndarray
    shortfall: np.ndarray
    alpha: np.ndarray = field(default=None)   # cut constants, per (scen, K, cell)
    lp_solves: int = 0


def _block_rhs(t: CellTemplate, vol_rhs, rider_slack, courier_slack):
    """Right-hand sides for all blocks of one cell, shape ``(n_blocks, n_rows)``."""
    parts = [vol_rhs]
    if t.has_rider_row:
        parts.append(rider_slack[:, None])
        parts.append(courier_slack[:, t.courier_rows])
    return np.concatenate(parts, axis=1)


def _solve_stacked(blocks, backend: str, verify: bool):
    """Solve independent blocks ``(A, sense, rhs, cost)``; returns ``(x, y)`` lists.

    HiGHS gets one block-diagonal LP; the native simplex solves blocks one at a
    time (its dense tableau would not scale to the stacked problem).
    """
    if backend == "native":
        xs, ys = [], []
        for A, sense, rhs, cost in blocks:
            lp = LinearProgram(cost, A, sense, rhs, np.zeros(cost.size), np.full(cost.size, np.inf),
                               np.zeros(cost.size, bool))
            sol = solve_lp(lp, backend="native", verify=verify)
            if not sol.optimal:
                raise SolverError(f"recourse subproblem returned {sol.status}")
            xs.append(sol.x)
            ys.append(sol.duals)
        return xs, ys, len(blocks)
    A = sp.block_diag([b[0] for b in blocks], format="csr")
    sense = np.concatenate([b[1] for b in blocks])
    rhs = np.concatenate([b[2] for b in blocks])
    cost = np.concatenate([b[3] for b in blocks])
    n = cost.size
    lp = LinearProgram(cost, A, sense, rhs, np.zeros(n), np.full(n, np.inf), np.zeros(n, bool))
    sol = solve_lp(lp, backend=backend, verify=verify)
    if not sol.optimal:
        raise SolverError(f"stacked recourse problem returned {sol.status}")
    xs, ys = [], []
    c0 = r0 = 0
    for A_b, _, rhs_b, cost_b in blocks:
        xs.append(sol.x[c0:c0 + cost_b.size])
        ys.append(sol.duals[r0:r0 + rhs_b.size])
        c0 += cost_b.size
        r0 += rhs_b.size
    return xs, ys, 1


class RecourseModel:
    """Subproblem data for one set of operational periods.

    Builds templates and nominal sync slacks once; :meth:`solve` then takes
    hub module levels per operational period.
    """

    def __init__(self, net: Network, p: Parameters, scen: ScenarioSet, ops, backend="highs",
                 verify=True):
        self.net, self.p, self.scen = net, p, scen
        self.ops = list(ops)
        self.backend = backend
        self.verify = verify
        self.templates = cell_templates(net, p)
        self.rider_slack, self.courier_slack = sync_slack(net, p, scen, self.ops)
        self.volume = scen.volume[:, np.asarray(self.ops, dtype=int)]   # (W, K, H)
        self.n_scen = scen.n_scenarios
        self.K = len(self.ops)

    def _blocks(self, hub_S: np.ndarray, t: CellTemplate):
        """Block right-hand sides of cell ``t`` for hub levels ``hub_S`` (K, H)."""
        D = self.volume[:, :, t.hubs]                          # (W, K, h)
        vol = D - self.p.module_volume * hub_S[None, :, t.hubs]
        W, K = self.n_scen, self.K
        rs = self.rider_slack[:, :, t.index].reshape(W * K)
        cs = self.courier_slack[:, :, t.hubs].reshape(W * K, t.n_hubs)
        return _block_rhs(t, vol.reshape(W * K, t.n_hubs), rs, cs)

    def _static_rhs(self, t: CellTemplate):
        """Right-hand side with ``S = 0``: volume rows read ``D_l``."""
        return self._blocks(np.zeros((self.K, len(self.net.hubs))), t)

    def solve(self, hub_S: np.ndarray, pareto: Optional[tuple] = None) -> BlockResult:
        """Solve every (scenario, period, cell) subproblem at hub levels ``hub_S``.

        ``hub_S`` has shape ``(K, n_hubs)`` (module counts per operational
        period).  With ``pareto = (core_S, base)`` the Magnanti-Wong problem is
        solved instead, using ``base`` (a plain :class:`BlockResult` at
        ``hub_S``) for the optimal values; blocks with zero value keep the
        ordinary duals.
        """
        W, K, H = self.n_scen, self.K, len(self.net.hubs)
        hub_S = np.asarray(hub_S, dtype=float)
        values = np.zeros((W, K, len(self.net.cells)))
        alpha = np.zeros_like(values)
        pi = np.zeros((W, K, H))
        lam = np.zeros((W, K, H))
        mu = np.zeros((W, K, len(self.net.cells)))
        pooled = np.zeros((W, K, len(self.net.pooling_arcs)))
        short = np.zeros((W, K, H))
        solves = 0
        for t in self.templates:
            rhs = self._blocks(hub_S, t)
            rhs0 = self._static_rhs(t)
            if t.n_arcs == 0:
                # only shortfall columns: closed form
                deficit = np.maximum(rhs, 0.0)
                z = deficit.reshape(W, K, t.n_hubs)
                short[:, :, t.hubs] = z
                values[:, :, t.index] = self.p.shortfall_penalty * z.sum(axis=2)
                pos = (rhs > 0).reshape(W, K, t.n_hubs)
                if pareto is not None:
                    # alternative optima at zero deficit: price them when the core point is short
                    core = pareto[0]
                    rhs_core = self._blocks(core, t).reshape(W, K, t.n_hubs)
                    pos = pos | ((rhs == 0).reshape(W, K, t.n_hubs) & (rhs_core > 0))
                y = np.where(pos, self.p.shortfall_penalty, 0.0)
                pi[:, :, t.hubs] = y
                alpha[:, :, t.index] = (y * rhs0.reshape(W, K, t.n_hubs)).sum(axis=2)
                continue
            if pareto is None:
                blocks = [(t.A, t.sense, rhs[b], t.cost) for b in range(W * K)]
                xs, ys, n = _solve_stacked(blocks, self.backend, self.verify)
                solves += n
                X = np.array(xs)
                Y = np.array(ys)
                vals = X @ t.cost
            else:
                core, base = pareto
                vsp = base.values[:, :, t.index].reshape(W * K)
                rhs_core = self._blocks(core, t)
                X, Y, vals, n = self._pareto_blocks(t, rhs, rhs_core, vsp, base)
                solves += n
            values[:, :, t.index] = vals.reshape(W, K)
            Xr = X.reshape(W, K, -1)
            Yr = Y.reshape(W, K, -1)
            pooled[:, :, t.arcs] = Xr[:, :, :t.n_arcs]
            short[:, :, t.hubs] = Xr[:, :, t.n_arcs:]
            pi[:, :, t.hubs] = Yr[:, :, :t.n_hubs]
            mu[:, :, t.index] = Yr[:, :, t.n_hubs]
            lam[:, :, t.hubs[t.courier_rows]] = Yr[:, :, t.n_hubs + 1:]
            alpha[:, :, t.index] = (Y * rhs0).sum(axis=1).reshape(W, K)
        return BlockResult(self.ops, values, pi, mu, lam, pooled, short, alpha, solves)

    def _pareto_blocks(self, t: CellTemplate, rhs, rhs_core, vsp, base: BlockResult):
        """Magnanti-Wong problems, one per block with positive subproblem value.

        ``min c.x - v_SP Y`` s.t. ``A x - b(S_hat) Y  [sense]  b(S^0)``: its
        dual maximises ``u.b(S^0)`` over dual solutions with ``u.b(S_hat) >= v_SP``.
        """
        W, K = self.n_scen, self.K
        nb = W * K
        X = np.zeros((nb, t.n_cols))
        Y = np.zeros((nb, t.n_rows))
        vals = np.zeros(nb)
        # start from the ordinary solution everywhere
        bp = base.pooled[:, :, t.arcs].reshape(nb, t.n_arcs)
        bz = base.shortfall[:, :, t.hubs].reshape(nb, t.n_hubs)
        X[:] = np.concatenate([bp, bz], axis=1)
        Y[:, :t.n_hubs] = base.pi[:, :, t.hubs].reshape(nb, t.n_hubs)
        Y[:, t.n_hubs] = base.mu[:, :, t.index].reshape(nb)
        Y[:, t.n_hubs + 1:] = base.lam[:, :, t.hubs[t.courier_rows]].reshape(nb, t.courier_rows.size)
        vals[:] = vsp
        todo = [b for b in range(nb) if vsp[b] > 0]
        if not todo:
            return X, Y, vals, 0
        blocks = []
        for b in todo:
            tol = 1e-7 * max(1.0, vsp[b])
            A = sp.hstack([t.A, sp.csr_matrix(-rhs[b][:, None])], format="csr")
            cost = np.append(t.cost, -(vsp[b] - tol))
            blocks.append((A, t.sense, rhs_core[b], cost))
        try:
            xs, ys, n = _solve_stacked(blocks, self.backend, self.verify)
        except SolverError:
            # unbounded or numerically troubled: keep the ordinary cuts
            return X, Y, vals, 0
        for b, x, y in zip(todo, xs, ys):
            Y[b] = y
        return X, Y, vals, n


# ------------------------------------------------------------------- emission

def recourse_solution(model: RecourseModel, res: BlockResult, repair: bool = True) -> RecourseSolution:
    """Full second-stage solution (detour counts, marginal costs, slacks).

    Detour counts are set to their tight values ``P/v^R``, ``P/v^C``.  With
    ``repair`` any synchronisation slack that came out negative through LP
    tolerances is removed by scaling the pooled volumes of that block down
    and moving the difference to shortfall.
    """
    net, p = model.net, model.p
    P = res.pooled.copy()
    Z = res.shortfall.copy()
    W, K = model.n_scen, model.K
    nC = len(net.cells)
    H = len(net.hubs)
    origin = np.array([net.hub_index[a.origin] for a in net.pooling_arcs], dtype=int)
    dest = np.array([net.hub_index[a.dest] for a in net.pooling_arcs], dtype=int)

    def detours(P):
        nRa = P / p.rider_volume
        nCa = P / p.courier_volume
        nRLC = np.zeros((W, K, nC))
        nCl = np.zeros((W, K, H))
        for t in model.templates:
            if t.n_arcs:
                nRLC[:, :, t.index] = nRa[:, :, t.arcs].sum(axis=2)
        if P.shape[2]:
            np.add.at(nCl.transpose(2, 0, 1), origin, nCa.transpose(2, 0, 1))
        return nRa, nRLC, nCa, nCl

    def slacks(nRLC, nCa):
        rs = np.zeros((W, K, nC))
        cs = model.courier_slack.copy()
        for t in model.templates:
            per = approx.rider_detour_time(net.cells[t.index], p)
            rs[:, :, t.index] = model.rider_slack[:, :, t.index] - per * nRLC[:, :, t.index]
            for j, k in enumerate(t.arcs):
                cs[:, :, origin[k]] -= nCa[:, :, k] * t.courier_per_volume[j] * p.courier_volume
        return rs, cs

    nRa, nRLC, nCa, nCl = detours(P)
    rs, cs = slacks(nRLC, nCa)
    if repair and P.shape[2] and (rs.min(initial=0) < 0 or cs.min(initial=0) < 0):
        for t in model.templates:
            if not t.n_arcs:
                continue
            used_r = model.rider_slack[:, :, t.index] - rs[:, :, t.index]
            ratio = np.ones((W, K))
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(used_r > 0, model.rider_slack[:, :, t.index] / used_r, 1.0)
            ratio = np.minimum(ratio, r)
            for i in t.courier_rows:
                h = t.hubs[i]
                used = model.courier_slack[:, :, h] - cs[:, :, h]
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratio = np.minimum(ratio, np.where(used > 0, model.courier_slack[:, :, h] / used, 1.0))
            ratio = np.clip(ratio * (1 - 1e-12), 0.0, 1.0)
            bad = ratio < 1.0
            if not bad.any():
                continue
            for k in t.arcs:
                cut = P[:, :, k] * (1.0 - ratio) * bad
                P[:, :, k] -= cut
                Z[:, :, dest[k]] += cut
        nRa, nRLC, nCa, nCl = detours(P)
        rs, cs = slacks(nRLC, nCa)

    rider_marg = np.zeros((W, K, nC))
    courier_marg = np.zeros((W, K, H))
    for t in model.templates:
        cell = net.cells[t.index]
        rider_marg[:, :, t.index] = nRLC[:, :, t.index] * approx.rider_detour_cost(cell, p)
        for k in t.arcs:
            courier_marg[:, :, origin[k]] += nCa[:, :, k] * approx.courier_arc_cost(
                net.pooling_arcs[k].distance, p)
    duals = {"pi": res.pi, "mu": res.mu, "lambda": res.lam}
    return RecourseSolution(list(model.ops), P, Z, nRa, nRLC, nCa, nCl, rider_marg, courier_marg,
                            rs, cs, duals)


def solution_cost(p: Parameters, sol: RecourseSolution) -> np.ndarray:
    """Recourse cost per (scenario, period) of an emitted solution."""
    return (sol.rider_marginal.sum(axis=2) + sol.courier_marginal.sum(axis=2)
            + p.shortfall_penalty * sol.shortfall.sum(axis=2))
