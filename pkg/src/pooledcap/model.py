"""Domain types shared by every solver: network, parameters, scenarios, plans.

Units throughout: km, km/h, hours, m^2 and $.  Tactical periods and
operational periods are 0-based.  Scenario arrays are indexed
``[scenario, operational period, hub]`` with hubs in ``Network.hubs`` order.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

FORMAT_VERSION = 1

HUB = "hub"
DEPOT = "depot"


class ValidationError(ValueError):
    """Input data violates a model invariant."""


@dataclass(frozen=True)
class Location:
    id: str
    kind: str
    x: float
    y: float
    local_cell: Optional[str] = None
    rent_factor: float = 0.0
    max_modules: int = 0
    holding_cost: float = 0.0

    @property
    def is_hub(self) -> bool:
        return self.kind == HUB


@dataclass(frozen=True)
class Arc:
    origin: str
    dest: str
    distance: float
    cost: float = 0.0


@dataclass(frozen=True)
class LocalCell:
    """A cluster of hubs served by one local hub.

    ``hub_density[i]`` is the pickup/delivery point density around
    ``hub_ids[i]`` (points per km^2); ``linehaul_radius`` is the mean distance
    from the local hub to the cell's access hubs.
    """

    id: str
    hub_ids: tuple
    area: float
    linehaul_radius: float
    hub_density: tuple
    center: tuple = (0.0, 0.0)

    @property
    def n_hubs(self) -> int:
        return len(self.hub_ids)

    @property
    def density(self) -> float:
        return self.n_hubs / self.area


@dataclass(frozen=True)
class Network:
    locations: tuple
    cells: tuple
    relocation_arcs: tuple
    pooling_arcs: tuple = ()

    @cached_property
    def loc_index(self) -> dict:
        return {loc.id: i for i, loc in enumerate(self.locations)}

    @cached_property
    def hubs(self) -> list:
        return [loc for loc in self.locations if loc.kind == HUB]

    @cached_property
    def depots(self) -> list:
        return [loc for loc in self.locations if loc.kind == DEPOT]

    @cached_property
    def hub_index(self) -> dict:
        """Location id -> position among hubs (scenario array axis)."""
        return {h.id: k for k, h in enumerate(self.hubs)}

    @cached_property
    def hub_loc(self) -> np.ndarray:
        """Hub position -> location index."""
        return np.array([self.loc_index[h.id] for h in self.hubs], dtype=int)

    @cached_property
    def depot_loc(self) -> np.ndarray:
        return np.array([self.loc_index[d.id] for d in self.depots], dtype=int)

    @cached_property
    def cell_index(self) -> dict:
        return {c.id: i for i, c in enumerate(self.cells)}

    @cached_property
    def cell_hubs(self) -> list:
        """Per cell, hub positions (scenario axis) of its members."""
        return [np.array([self.hub_index[h] for h in c.hub_ids], dtype=int) for c in self.cells]

    @cached_property
    def holding_costs(self) -> np.ndarray:
        return np.array([loc.holding_cost for loc in self.locations])

    @cached_property
    def max_modules(self) -> np.ndarray:
        return np.array([loc.max_modules for loc in self.locations])

    @cached_property
    def arc_ends(self) -> np.ndarray:
        """(n_arcs, 2) location indices of relocation arcs."""
        return np.array([[self.loc_index[a.origin], self.loc_index[a.dest]]
                         for a in self.relocation_arcs], dtype=int).reshape(-1, 2)

    @cached_property
    def arc_costs(self) -> np.ndarray:
        return np.array([a.cost for a in self.relocation_arcs])

    def delta_in(self, loc_id: str) -> list:
        return [k for k, a in enumerate(self.relocation_arcs) if a.dest == loc_id]

    def delta_out(self, loc_id: str) -> list:
        return [k for k, a in enumerate(self.relocation_arcs) if a.origin == loc_id]

    def pool_out(self, hub_id: str) -> list:
        """A_pool(l) = N^-(l): pooling arcs leaving ``hub_id``."""
        return [k for k, a in enumerate(self.pooling_arcs) if a.origin == hub_id]

    def pool_in(self, hub_id: str) -> list:
        return [k for k, a in enumerate(self.pooling_arcs) if a.dest == hub_id]

    @cached_property
    def cell_pooling_arcs(self) -> list:
        """Per cell, the pooling arcs among its hubs."""
        out = [[] for _ in self.cells]
        hub_cell = {h.id: self.cell_index[h.local_cell] for h in self.hubs}
        for a in self.pooling_arcs:
            out[hub_cell[a.origin]].append(a)
        return out

    def distance(self, i: str, j: str) -> float:
        a, b = self.locations[self.loc_index[i]], self.locations[self.loc_index[j]]
        return math.hypot(a.x - b.x, a.y - b.y)


@dataclass(frozen=True)
class Parameters:
    """Operating constants; defaults are the calibration table values.

    Minute-valued stop/handling/setup times are stored in hours.  Wage rates
    are not part of that table and default to $20/h.
    """

    module_volume: float = 0.75          # v
    rider_volume: float = 6.40           # v^R
    courier_volume: float = 0.48         # v^C
    k_rider: float = 0.82
    k_courier: float = 1.15
    rider_speed: float = 30.0            # s^R
    rider_linehaul_speed: float = 50.0   # s^R_0
    courier_speed: float = 7.0           # s^C
    courier_detour_speed: float = 15.0   # s^C_0
    rider_setup_time: float = 5 / 60     # t^R_s
    rider_stop_time: float = 5 / 60      # t^R_a
    rider_handling_time: float = 1 / 60  # t^R_u
    courier_stop_time: float = 1 / 60    # t^C_a
    courier_handling_time: float = 2 / 60  # t^C_u
    rider_fixed_cost: float = 10.0       # c^R_f per tour
    rider_tour_cost: float = 1.8         # c^R_v per km
    rider_linehaul_cost: float = 1.2     # c^R_v0 per km
    courier_tour_cost: float = 1.0       # c^C_v per km
    courier_detour_cost: float = 0.8     # c^C_v0 per km
    rider_wage: float = 20.0             # c^R_w per hour
    courier_wage: float = 20.0           # c^C_w per hour
    shortfall_penalty: float = 100_000.0  # p_l per m^2 short
    total_modules: int = 5000            # I_0
    period_length: float = 1.0           # Delta_tau, hours
    n_periods: int = 8                   # |T|
    ops_per_period: int = 70             # |T_t|
    lookahead: int = 0                   # theta
    epsilon: float = 0.001
    eps_hat_start: float = 0.05
    headroom: float = 0.10

    def __post_init__(self):
        errs = parameter_violations(self)
        if errs:
            raise ValidationError("; ".join(errs))

    def replace(self, **kw) -> "Parameters":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Parameters":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown parameter(s): {sorted(unknown)}")
        return cls(**d)


def parameter_violations(p: Parameters) -> list:
    errs = []
    for f in fields(p):
        val = getattr(p, f.name)
        if f.name == "lookahead":
            if val < 0:
                errs.append("lookahead must be >= 0")
        elif not val > 0:
            errs.append(f"{f.name} must be > 0 (got {val})")
    if p.courier_volume > p.rider_volume:
        errs.append("courier_volume must not exceed rider_volume")
    return errs


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Hourly demand scenarios.

    ``pickups``, ``deliveries``, ``volume`` and ``couriers`` have shape
    ``(n_scenarios, n_ops, n_hubs)``; ``riders`` has shape
    ``(n_scenarios, n_ops, n_cells)``.
    """

    probabilities: np.ndarray
    pickups: np.ndarray
    deliveries: np.ndarray
    volume: np.ndarray
    riders: np.ndarray
    couriers: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            arr = np.array(getattr(self, f.name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, f.name, arr)

    @property
    def n_scenarios(self) -> int:
        return self.probabilities.size

    @property
    def n_ops(self) -> int:
        return self.pickups.shape[1]

    @property
    def stops(self) -> np.ndarray:
        return self.pickups + self.deliveries

    def __eq__(self, other):
        if not isinstance(other, ScenarioSet):
            return NotImplemented
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name))
                   for f in fields(self))

    def subset(self, scenarios: Sequence[int]) -> "ScenarioSet":
        idx = np.asarray(scenarios, dtype=int)
        prob = self.probabilities[idx]
        return ScenarioSet(prob / prob.sum(), self.pickups[idx], self.deliveries[idx],
                           self.volume[idx], self.riders[idx], self.couriers[idx])


def ops_of_period(params: Parameters, t: int) -> range:
    """Operational period indices belonging to tactical period ``t``."""
    k = params.ops_per_period
    return range(t * k, (t + 1) * k)


@dataclass
class DeploymentPlan:
    """Module counts ``S[t, loc]`` and relocations ``R[t, arc]`` for ``periods``."""

    periods: list
    S: np.ndarray
    R: np.ndarray
    holding: float = 0.0
    relocation: float = 0.0
    recourse: float = 0.0
    certified: bool = True

    @property
    def objective(self) -> float:
        return self.holding + self.relocation + self.recourse


@dataclass
class RecourseSolution:
    """Second-stage values for the operational periods ``ops``.

    Arrays are indexed ``[scenario, k, ...]`` where ``k`` runs over ``ops``;
    pooling arrays follow ``Network.pooling_arcs`` order.
    """

    ops: list
    pooled: np.ndarray            # P_a
    shortfall: np.ndarray         # Z_l
    rider_arc_detours: np.ndarray     # n^R_a
    rider_cell_detours: np.ndarray    # n^R_LC
    courier_arc_detours: np.ndarray   # n^C_a
    courier_hub_detours: np.ndarray   # n^C_l
    rider_marginal: np.ndarray        # Delta C^R_LC
    courier_marginal: np.ndarray      # Delta C^C_l
    rider_slack: np.ndarray
    courier_slack: np.ndarray
    duals: dict = field(default_factory=dict)


# ---------------------------------------------------------------- validation

def validate_network(net: Network, tol: float = 1e-9) -> list:
    """All violated network invariants, one message per violation."""
    out = []
    ids = [loc.id for loc in net.locations]
    if len(set(ids)) != len(ids):
        out.append("locations: duplicate ids")
    cell_ids = {c.id for c in net.cells}
    for loc in net.locations:
        if loc.kind not in (HUB, DEPOT):
            out.append(f"location {loc.id}: unknown kind {loc.kind!r}")
        if loc.kind == HUB and loc.local_cell is None:
            out.append(f"hub {loc.id}: missing local cell")
        if loc.kind == HUB and loc.local_cell is not None and loc.local_cell not in cell_ids:
            out.append(f"hub {loc.id}: unknown local cell {loc.local_cell}")
        if loc.kind == DEPOT and loc.local_cell is not None:
            out.append(f"depot {loc.id}: depots carry no local cell")
        if loc.max_modules < 0:
            out.append(f"location {loc.id}: max_modules < 0")
        if loc.rent_factor < 0:
            out.append(f"location {loc.id}: rent_factor < 0")
        if loc.holding_cost < 0:
            out.append(f"location {loc.id}: holding_cost < 0")
    kinds = {loc.id: loc for loc in net.locations}
    for c in net.cells:
        if c.n_hubs < 1:
            out.append(f"cell {c.id}: no hubs")
        if not c.area > 0:
            out.append(f"cell {c.id}: area must be > 0")
        if c.linehaul_radius < 0:
            out.append(f"cell {c.id}: linehaul radius < 0")
        if len(c.hub_density) != c.n_hubs:
            out.append(f"cell {c.id}: hub_density length mismatch")
        for h, dens in zip(c.hub_ids, c.hub_density):
            if not dens > 0:
                out.append(f"cell {c.id}: hub {h} density must be > 0")
        for h in c.hub_ids:
            loc = kinds.get(h)
            if loc is None or loc.kind != HUB or loc.local_cell != c.id:
                out.append(f"cell {c.id}: member {h} is not a hub of this cell")

    n = len(net.locations)
    idx = {loc.id: i for i, loc in enumerate(net.locations)}
    D = np.full((n, n), np.nan)
    for a in net.relocation_arcs:
        if a.origin not in idx or a.dest not in idx:
            out.append(f"relocation arc {a.origin}->{a.dest}: unknown endpoint")
            continue
        if a.origin == a.dest:
            out.append(f"relocation arc {a.origin}->{a.dest}: self loop")
            continue
        if not a.distance > 0:
            out.append(f"relocation arc {a.origin}->{a.dest}: distance must be > 0")
        if a.cost < 0:
            out.append(f"relocation arc {a.origin}->{a.dest}: cost < 0")
        D[idx[a.origin], idx[a.dest]] = a.distance
    np.fill_diagonal(D, 0.0)
    missing = np.argwhere(np.isnan(D))
    for i, j in missing:
        out.append(f"relocation arcs: missing {ids[i]}->{ids[j]} (graph must be complete)")
    Dm = np.where(np.isnan(D), np.inf, D)
    for k in range(n):
        via = Dm[:, [k]] + Dm[[k], :]
        bad = np.argwhere(np.isfinite(Dm) & (Dm > via + tol * np.maximum(1.0, via)))
        for i, j in bad:
            out.append(f"relocation arcs: triangle inequality fails for {ids[i]}->{ids[j]} "
                       f"via {ids[k]}")

    for a in net.pooling_arcs:
        o, d = kinds.get(a.origin), kinds.get(a.dest)
        if o is None or d is None or o.kind != HUB or d.kind != HUB:
            out.append(f"pooling arc {a.origin}->{a.dest}: endpoints must be hubs")
            continue
        if a.origin == a.dest:
            out.append(f"pooling arc {a.origin}->{a.dest}: endpoints must differ")
        if o.local_cell != d.local_cell:
            out.append(f"pooling arc {a.origin}->{a.dest}: hubs lie in different cells")
        if not a.distance > 0:
            out.append(f"pooling arc {a.origin}->{a.dest}: distance must be > 0")
        if np.isnan(D[idx[a.origin], idx[a.dest]]):
            out.append(f"pooling arc {a.origin}->{a.dest}: not a relocation arc")
    return out


def relocation_cost(distance: float, per_km: float = 1.5, fixed: float = 40.0) -> float:
    """Module relocation cost: haul per km plus two operators for two hours."""
    return per_km * distance + fixed


def derive_arc_sets(net: Network, pooling_distance: float, per_km: float = 1.5,
                    fixed: float = 40.0) -> Network:
    """Complete Euclidean relocation graph plus pooling arcs.

    Pooling arcs join distinct hubs of the same cell at most
    ``pooling_distance`` km apart.  Existing relocation arc costs are kept;
    new arcs are priced with :func:`relocation_cost`.
    """
    known = {(a.origin, a.dest): a.cost for a in net.relocation_arcs}
    locs = net.locations
    reloc = []
    for i in locs:
        for j in locs:
            if i.id == j.id:
                continue
            d = math.hypot(i.x - j.x, i.y - j.y)
            cost = known.get((i.id, j.id), relocation_cost(d, per_km, fixed))
            reloc.append(Arc(i.id, j.id, d, cost))
    pool = []
    for i in locs:
        for j in locs:
            if (i.id != j.id and i.kind == HUB and j.kind == HUB
                    and i.local_cell == j.local_cell):
                d = math.hypot(i.x - j.x, i.y - j.y)
                if d <= pooling_distance:
                    pool.append(Arc(i.id, j.id, d))
    return Network(net.locations, net.cells, tuple(reloc), tuple(pool))


def location_caps(net: Network, params: Parameters) -> np.ndarray:
    """Module bound per location: ``S_bar`` at hubs, ``I_0`` at depots."""
    return np.where(np.isin(np.arange(len(net.locations)), net.hub_loc), net.max_modules,
                    params.total_modules).astype(float)


def relocation_caps(net: Network, params: Parameters) -> np.ndarray:
    """Upper bound per relocation arc: the smaller cap of its two ends.

    Moving more than that through one arc in one period means some modules
    pass through a location and leave again, which a direct arc does more
    cheaply, so the bound keeps an optimal plan and tightens the relaxation.
    """
    caps = location_caps(net, params)
    ends = net.arc_ends
    return np.minimum(caps[ends[:, 0]], caps[ends[:, 1]])


def scale_costs(net: Network, holding: float = 1.0, relocation: float = 1.0) -> Network:
    """Network with holding and relocation cost vectors scaled linearly."""
    locs = tuple(replace(loc, holding_cost=loc.holding_cost * holding) for loc in net.locations)
    arcs = tuple(replace(a, cost=a.cost * relocation) for a in net.relocation_arcs)
    return Network(locs, net.cells, arcs, net.pooling_arcs)


def scenario_violations(net: Network, params: Parameters, scen: ScenarioSet) -> list:
    out = []
    nh, nc = len(net.hubs), len(net.cells)
    n_ops = params.n_periods * params.ops_per_period
    shape = (scen.n_scenarios, scen.n_ops, nh)
    for name in ("pickups", "deliveries", "volume", "couriers"):
        arr = getattr(scen, name)
        if arr.shape != shape:
            out.append(f"scenarios.{name}: shape {arr.shape} != {shape}")
        elif np.any(arr < 0):
            out.append(f"scenarios.{name}: negative entries")
    if scen.riders.shape != (scen.n_scenarios, scen.n_ops, nc):
        out.append(f"scenarios.riders: shape {scen.riders.shape} != "
                   f"{(scen.n_scenarios, scen.n_ops, nc)}")
    elif np.any(scen.riders < 0):
        out.append("scenarios.riders: negative entries")
    if scen.n_ops < n_ops:
        out.append(f"scenarios: {scen.n_ops} operational periods, horizon needs {n_ops}")
    if np.any(scen.probabilities < 0) or abs(scen.probabilities.sum() - 1.0) > 1e-9:
        out.append("scenarios.probabilities: must be >= 0 and sum to 1")
    if not out:
        stops = scen.pickups + scen.deliveries
        if np.any((stops > 0) & (scen.couriers < 1)):
            out.append("scenarios.couriers: hub with workload but no courier")
        for c, members in enumerate(net.cell_hubs):
            load = stops[:, :, members].sum(axis=2)
            if np.any((load > 0) & (scen.riders[:, :, c] < 1)):
                out.append(f"scenarios.riders: cell {net.cells[c].id} has workload but no rider")
    return out


def plan_violations(net: Network, params: Parameters, plan: DeploymentPlan,
                    initial: Optional[np.ndarray] = None) -> list:
    """Integrality, conservation, flow balance and spatial caps of a plan."""
    out = []
    S, R = np.asarray(plan.S), np.asarray(plan.R)
    if np.any(S != np.round(S)) or np.any(R != np.round(R)):
        out.append("plan: non-integer entries")
    if np.any(S < 0) or np.any(R < 0):
        out.append("plan: negative entries")
    for k, t in enumerate(plan.periods):
        if int(round(S[k].sum())) != params.total_modules:
            out.append(f"plan: period {t} holds {S[k].sum()} modules, expected "
                       f"{params.total_modules}")
        over = np.nonzero(S[k][net.hub_loc] > net.max_modules[net.hub_loc])[0]
        for h in over:
            out.append(f"plan: period {t} hub {net.hubs[h].id} exceeds its module cap")
        prev = initial if k == 0 else S[k - 1]
        if prev is None:
            continue
        ends = net.arc_ends
        flow = np.zeros(len(net.locations), dtype=np.int64)
        np.add.at(flow, ends[:, 1], np.round(R[k]).astype(np.int64))
        np.subtract.at(flow, ends[:, 0], np.round(R[k]).astype(np.int64))
        bal = np.round(S[k]).astype(np.int64) - np.round(prev).astype(np.int64) - flow
        if np.any(bal != 0):
            out.append(f"plan: flow balance broken in period {t}")
    return out


# ------------------------------------------------------------- serialization

def network_to_dict(net: Network) -> dict:
    return {
        "locations": [asdict(loc) for loc in net.locations],
        "cells": [{**asdict(c), "hub_ids": list(c.hub_ids), "hub_density": list(c.hub_density),
                   "center": list(c.center)} for c in net.cells],
        "relocation_arcs": [asdict(a) for a in net.relocation_arcs],
        "pooling_arcs": [asdict(a) for a in net.pooling_arcs],
    }


def network_from_dict(d: dict) -> Network:
    try:
        locs = tuple(Location(**loc) for loc in d["locations"])
        cells = tuple(LocalCell(id=c["id"], hub_ids=tuple(c["hub_ids"]), area=c["area"],
                                linehaul_radius=c["linehaul_radius"],
                                hub_density=tuple(c["hub_density"]),
                                center=tuple(c.get("center", (0.0, 0.0))))
                      for c in d["cells"])
        reloc = tuple(Arc(**a) for a in d["relocation_arcs"])
        pool = tuple(Arc(**a) for a in d.get("pooling_arcs", []))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"network: malformed entry ({exc})") from exc
    return Network(locs, cells, reloc, pool)


def scenarios_to_dict(scen: ScenarioSet) -> dict:
    return {f.name: getattr(scen, f.name).tolist() for f in fields(scen)}


def scenarios_from_dict(d: dict) -> ScenarioSet:
    try:
        return ScenarioSet(**{f.name: np.asarray(d[f.name], dtype=float)
                              for f in fields(ScenarioSet)})
    except KeyError as exc:
        raise ValidationError(f"scenarios: missing field {exc}") from exc
