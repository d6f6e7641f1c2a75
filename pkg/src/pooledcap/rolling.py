"""Rolling-horizon driver, static benchmark and savings metrics.

Each step solves the sub-horizon ``[t, t + theta]`` with Benders, keeps only
the first period's deployment and relocations, and chains that deployment
into the next step.  Realized cost is the expected cost over the evaluation
scenarios at the implemented deployment.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import approx
from .benders import BendersOptions, solve_benders
from .model import Network, Parameters, ScenarioSet, ops_of_period
from .recourse import RecourseModel, recourse_solution

PERIOD_COLUMNS = ["period", "modules_deployed", "relocations", "holding_cost", "relocation_cost",
                  "recourse_cost", "total_cost", "rider_travel_km", "courier_travel_km",
                  "benders_iterations", "certified"]


class RollingHorizonError(RuntimeError):
    """Raised when a step fails; ``partial`` holds the periods already implemented."""

    def __init__(self, message: str, partial: "HorizonResult"):
        super().__init__(message)
        self.partial = partial


@dataclass
class HorizonResult:
    S: np.ndarray                 # (T, n_locations) implemented deployments
    R: np.ndarray                 # (T, n_arcs) implemented relocations
    initial: np.ndarray           # S(0) the horizon starts from
    holding: np.ndarray           # per period
    relocation: np.ndarray
    recourse: np.ndarray
    iterations: list = field(default_factory=list)
    certified: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    rider_travel: np.ndarray = field(default_factory=lambda: np.zeros(0))    # km per op period
    courier_travel: np.ndarray = field(default_factory=lambda: np.zeros(0))
    min_slack: float = np.inf     # smallest synchronisation slack over emitted recourse
    lookahead: int = 0
    in_sample: bool = True
    status: str = "complete"
    hub_loc: Optional[np.ndarray] = None

    @property
    def n_periods(self) -> int:
        return len(self.holding)

    @property
    def period_costs(self) -> np.ndarray:
        return self.holding + self.relocation + self.recourse

    @property
    def total_cost(self) -> float:
        return float(self.period_costs.sum())

    @property
    def deployed(self) -> np.ndarray:
        """Modules sitting at hubs in each period."""
        return self.S[:, self.hub_loc].sum(axis=1)

    @property
    def capacity(self) -> int:
        """Maximum number of modules deployed at hubs over the horizon."""
        return int(self.deployed.max()) if self.n_periods else 0

    @property
    def relocation_share(self) -> float:
        """Average relocated modules per period as a fraction of capacity."""
        if not self.n_periods or self.capacity == 0:
            return 0.0
        return float(self.R.sum(axis=1).mean() / self.capacity)

    def rows(self) -> list:
        out = []
        for t in range(self.n_periods):
            out.append({"period": t, "modules_deployed": int(self.deployed[t]),
                        "relocations": int(self.R[t].sum()),
                        "holding_cost": float(self.holding[t]),
                        "relocation_cost": float(self.relocation[t]),
                        "recourse_cost": float(self.recourse[t]),
                        "total_cost": float(self.period_costs[t]),
                        "rider_travel_km": float(self.rider_travel[t]),
                        "courier_travel_km": float(self.courier_travel[t]),
                        "benders_iterations": self.iterations[t],
                        "certified": bool(self.certified[t])})
        return out

    def to_dict(self) -> dict:
        return {"lookahead": self.lookahead, "status": self.status, "in_sample": self.in_sample,
                "realized_cost": "expected value over the evaluation scenario set",
                "total_cost": self.total_cost, "capacity": self.capacity,
                "relocation_share": self.relocation_share, "min_slack": self.min_slack,
                "wall_times": list(self.wall_times),
                "initial": self.initial.tolist(), "S": self.S.tolist(), "R": self.R.tolist(),
                "periods": self.rows()}

    def write_csv(self, path) -> None:
        _atomic_csv(path, PERIOD_COLUMNS, [[r[c] for c in PERIOD_COLUMNS] for r in self.rows()])

    def write_json(self, path) -> None:
        _atomic_text(path, json.dumps(self.to_dict(), indent=2))


def _atomic_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _atomic_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    tmp.replace(path)


def bootstrap_initial(net: Network, params: Parameters, scen: ScenarioSet, period: int = 0,
                      options: Optional[BendersOptions] = None) -> np.ndarray:
    """Free placement of all modules for one period, used as ``S(0)``.

    The placement is the single-period optimum without the flow-balance
    rows, evaluated on the scenarios of ``period`` (the period preceding the
    horizon is not part of the scenario set).
    """
    plan, _ = solve_benders(net, params, scen, [period], initial=None, options=options)
    return plan.S[0].copy()


def period_recourse(net: Network, params: Parameters, scen: ScenarioSet, t: int, S_t: np.ndarray,
                    backend: str = "highs"):
    """Expected recourse cost of period ``t`` at deployment ``S_t`` and the emitted solution."""
    ops = list(ops_of_period(params, t))
    model = RecourseModel(net, params, scen, ops, backend=backend)
    hub_S = np.tile(np.asarray(S_t, dtype=float)[net.hub_loc], (len(ops), 1))
    res = model.solve(hub_S)
    sol = recourse_solution(model, res)
    expected = float(scen.probabilities @ res.values.sum(axis=(1, 2)))
    return expected, sol


def detour_travel(net: Network, params: Parameters, scen: ScenarioSet, sol) -> tuple:
    """Expected rider and courier detour km per operational period."""
    per_rider = np.array([approx.rider_detour_length(c, params) for c in net.cells])
    per_arc = np.array([2.0 * a.distance for a in net.pooling_arcs])
    rider = (sol.rider_cell_detours * per_rider).sum(axis=2).mean(axis=1)
    courier = (sol.courier_arc_detours * per_arc).sum(axis=2).mean(axis=1)
    return float(scen.probabilities @ rider), float(scen.probabilities @ courier)


def run_rolling_horizon(net: Network, params: Parameters, scen: ScenarioSet,
                        theta: Optional[int] = None, initial: Optional[np.ndarray] = None,
                        options: Optional[BendersOptions] = None,
                        eval_scen: Optional[ScenarioSet] = None,
                        log_dir=None) -> HorizonResult:
    """Rolling horizon with ``theta`` periods of lookahead.

    ``initial`` defaults to :func:`bootstrap_initial`.  ``eval_scen`` (default
    ``scen``) is the scenario set the implemented decisions are priced on.
    Benders iteration logs go to ``log_dir/benders_t{t}.csv`` when given.
    """
    theta = params.lookahead if theta is None else int(theta)
    if theta < 0:
        raise ValueError("lookahead must be >= 0")
    opt = options or BendersOptions()
    T = params.n_periods
    if initial is None:
        initial = bootstrap_initial(net, params, scen, 0, opt)
    initial = np.asarray(initial, dtype=float)
    ev = scen if eval_scen is None else eval_scen
    nL, nA = len(net.locations), len(net.relocation_arcs)
    res = HorizonResult(np.zeros((0, nL)), np.zeros((0, nA)), initial, np.zeros(0), np.zeros(0),
                        np.zeros(0), lookahead=theta, in_sample=eval_scen is None,
                        hub_loc=net.hub_loc)
    S_prev = initial
    for t in range(T):
        periods = list(range(t, min(t + theta, T - 1) + 1))
        step_opt = opt
        if log_dir is not None:
            step_opt = replace(opt, log_path=str(Path(log_dir) / f"benders_t{t}.csv"))
        start = time.perf_counter()
        try:
            plan, state = solve_benders(net, params, scen, periods, initial=S_prev, options=step_opt)
            S_t, R_t = plan.S[0], plan.R[0]
            rec, sol = period_recourse(net, params, ev, t, S_t, backend=opt.backend)
            r_km, c_km = detour_travel(net, params, ev, sol)
        except Exception as exc:
            res.status = "aborted"
            raise RollingHorizonError(f"period {t}: {exc}", res) from exc
        res.S = np.vstack([res.S, S_t[None]])
        res.R = np.vstack([res.R, R_t[None]])
        res.holding = np.append(res.holding, float(S_t @ net.holding_costs))
        res.relocation = np.append(res.relocation, float(R_t @ net.arc_costs))
        res.recourse = np.append(res.recourse, rec)
        res.rider_travel = np.append(res.rider_travel, r_km)
        res.courier_travel = np.append(res.courier_travel, c_km)
        res.iterations.append(state.iteration)
        res.certified.append(state.certified)
        res.wall_times.append(time.perf_counter() - start)
        res.min_slack = min(res.min_slack, float(sol.rider_slack.min(initial=np.inf)),
                            float(sol.courier_slack.min(initial=np.inf)))
        S_prev = S_t
    return res


@dataclass
class Benchmark:
    """Static deployment covering the worst case of every hub."""

    S: np.ndarray          # modules per location, depots at 0
    cost: float
    n_periods: int

    @property
    def modules(self) -> int:
        return int(self.S.sum())


def _modules_needed(volume: np.ndarray, v: float) -> np.ndarray:
    # guard against D/v landing a hair above an integer
    return np.maximum(np.ceil(volume / v - 1e-9), 0.0)


def static_benchmark(net: Network, params: Parameters, scen: ScenarioSet) -> Benchmark:
    """``S_l = ceil(max D_l / v)`` held constant; spatial caps are ignored."""
    T = params.n_periods
    ops = np.arange(T * params.ops_per_period)
    peak = scen.volume[:, ops].max(axis=(0, 1)) if scen.n_scenarios else np.zeros(len(net.hubs))
    S = np.zeros(len(net.locations))
    S[net.hub_loc] = _modules_needed(peak, params.module_volume)
    cost = float(T * (S @ net.holding_costs))
    return Benchmark(S, cost, T)


def relocation_lower_bound(net: Network, params: Parameters, scen: ScenarioSet) -> float:
    """Holding cost of per-period worst-case coverage with free relocation."""
    h = net.holding_costs[net.hub_loc]
    total = 0.0
    for t in range(params.n_periods):
        ops = np.asarray(ops_of_period(params, t))
        peak = scen.volume[:, ops].max(axis=(0, 1))
        total += float(h @ _modules_needed(peak, params.module_volume))
    return total


def savings(dynamic: float, static: float) -> float:
    """``1 - dynamic / static``; zero when the static value is zero."""
    if static == 0:
        return 0.0
    return 1.0 - dynamic / static


def compute_savings(result: HorizonResult, benchmark: Benchmark):
    """Cost and capacity savings of ``result`` against ``benchmark`` (fractions)."""
    return (savings(result.total_cost, benchmark.cost),
            savings(result.capacity, benchmark.modules))


def percent(x: float) -> float:
    """Fraction to percent rounded to two decimals."""
    return math.floor(x * 10000 + 0.5) / 100
