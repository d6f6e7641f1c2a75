"""Synthetic networks and demand scenarios, and the JSON instance format."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import approx
from .model import (DEPOT, FORMAT_VERSION, HUB, LocalCell, Location, Network, Parameters,
                    ScenarioSet, ValidationError, derive_arc_sets, network_from_dict,
                    network_to_dict, scenario_violations, scenarios_from_dict, scenarios_to_dict,
                    validate_network)

# label -> (access hubs, local cells, area km^2)
INSTANCE_SIZES = {
    "A": (39, 1, 24.2),
    "B": (54, 2, 42.1),
    "C": (138, 4, 66.0),
    "D": (421, 10, 178.4),
    "E": (838, 20, 410.0),
}

AMORTIZED_MODULE_COST = 2000 / (5 * 52)
RENT_PER_PERIOD = 75.0


class InstanceError(ValueError):
    """Instance or GenSpec file could not be parsed or failed validation."""


def holding_cost(rent_factor: float) -> float:
    """Weekly holding cost of one module at a hub with the given rent factor."""
    return AMORTIZED_MODULE_COST + RENT_PER_PERIOD * (1.0 + rent_factor)


def _bell(hours: int, peak: float, width: float) -> np.ndarray:
    h = np.arange(hours, dtype=float)
    return 0.5 + np.exp(-((h - peak) / width) ** 2)


@dataclass(frozen=True)
class GenSpec:
    """Recipe for a synthetic instance.

    ``label`` picks one of the standard sizes; otherwise ``n_hubs``,
    ``n_cells`` and ``area`` are used.  Seasonality tables are multiplicative:
    ``monthly`` is indexed by ``t // 4``, ``weekly`` by ``t % 4``, ``daily`` by
    day of week and ``hourly`` by hour of day (both cyclic).  Empty tables fall
    back to the built-in profiles.  ``seed`` drives geometry and the demand
    profile, ``scenario_seed`` (default ``seed``) the sampled scenarios.
    """

    label: Optional[str] = None
    n_hubs: int = 12
    n_cells: int = 1
    area: float = 8.0
    seed: int = 0
    scenario_seed: Optional[int] = None
    n_scenarios: int = 100
    n_periods: int = 8
    days_per_week: int = 7
    hours_per_day: int = 10
    base_rate: float = 7.0
    hub_rate_range: tuple = (0.6, 1.4)
    monthly: tuple = ()
    weekly: tuple = ()
    daily: tuple = ()
    hourly: tuple = ()
    hub_trend_sd: float = 0.08
    peak_shift: float = 2.0
    noise_sigma: float = 0.25
    pooling_distance: float = 1.0
    headroom: float = 0.10
    parcel_footprint: float = 0.06
    dwell_factor: float = 2.0
    point_density: float = 1000.0
    max_modules: int = 15
    rent_factor_range: tuple = (0.02, 0.15)
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label is not None:
            if self.label not in INSTANCE_SIZES:
                raise ValidationError(f"unknown instance label {self.label!r}")
            hubs, cells, area = INSTANCE_SIZES[self.label]
            object.__setattr__(self, "n_hubs", hubs)
            object.__setattr__(self, "n_cells", cells)
            object.__setattr__(self, "area", area)
        for name in ("hub_rate_range", "monthly", "weekly", "daily", "hourly",
                     "rent_factor_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        errs = []
        for name in ("n_hubs", "n_cells", "n_scenarios", "n_periods", "days_per_week",
                     "hours_per_day"):
            if getattr(self, name) < 1:
                errs.append(f"{name} must be >= 1")
        if self.n_cells > self.n_hubs:
            errs.append("n_cells must not exceed n_hubs")
        if not self.area > 0:
            errs.append("area must be > 0")
        for name in ("monthly", "weekly", "daily", "hourly", "hub_rate_range"):
            if any(not m > 0 for m in getattr(self, name)):
                errs.append(f"{name} multipliers must be > 0")
        if self.base_rate < 0 or self.noise_sigma < 0 or self.hub_trend_sd < 0:
            errs.append("base_rate, noise_sigma and hub_trend_sd must be >= 0")
        if errs:
            raise ValidationError("; ".join(errs))

    @property
    def ops_per_period(self) -> int:
        return self.days_per_week * self.hours_per_day

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown GenSpec field(s): {sorted(unknown)}")
        return cls(**d)


def make_parameters(spec: GenSpec) -> Parameters:
    base = {"n_periods": spec.n_periods, "ops_per_period": spec.ops_per_period,
            "headroom": spec.headroom}
    base.update(spec.parameters)
    return Parameters(**base)


def _streams(seed: int):
    """Independent generators for geometry and for the demand profile."""
    geo, profile = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(geo), np.random.default_rng(profile)


def generate_network(spec: GenSpec) -> Network:
    """Hubs spread uniformly over square cells laid out on a grid."""
    rng, _ = _streams(spec.seed)
    params = make_parameters(spec)
    cell_area = spec.area / spec.n_cells
    side = math.sqrt(cell_area)
    cols = math.ceil(math.sqrt(spec.n_cells))
    counts = [spec.n_hubs // spec.n_cells + (1 if c < spec.n_hubs % spec.n_cells else 0)
              for c in range(spec.n_cells)]
    width = len(str(spec.n_hubs))
    locations, cells = [], []
    k = 0
    for c in range(spec.n_cells):
        x0, y0 = (c % cols) * side, (c // cols) * side
        center = (x0 + side / 2, y0 + side / 2)
        cid = f"LC{c + 1}"
        ids, radii = [], []
        for _ in range(counts[c]):
            k += 1
            x, y = x0 + rng.random() * side, y0 + rng.random() * side
            f = float(rng.uniform(*spec.rent_factor_range))
            hid = f"H{k:0{width}d}"
            locations.append(Location(hid, HUB, x, y, cid, f, spec.max_modules, holding_cost(f)))
            ids.append(hid)
            radii.append(math.hypot(x - center[0], y - center[1]))
        cells.append(LocalCell(cid, tuple(ids), cell_area, float(np.mean(radii)),
                               tuple([spec.point_density] * len(ids)), center))
    depot_x, depot_y = cells[0].center
    locations.append(Location("W1", DEPOT, depot_x, depot_y, None, 0.0,
                              params.total_modules, 0.0))
    net = derive_arc_sets(Network(tuple(locations), tuple(cells), ()), spec.pooling_distance)
    errs = validate_network(net)
    if errs:
        raise ValidationError("; ".join(errs[:5]))
    return net


def _table(values: tuple, default: np.ndarray, n: int) -> np.ndarray:
    arr = np.asarray(values if values else default, dtype=float)
    return arr[np.arange(n) % arr.size]


def demand_means(net: Network, spec: GenSpec) -> np.ndarray:
    """Expected pickups (= expected deliveries) per (operational period, hub)."""
    _, rng = _streams(spec.seed)
    nh = len(net.hubs)
    H, days, T = spec.hours_per_day, spec.days_per_week, spec.n_periods
    hub_rate = spec.base_rate * rng.uniform(*spec.hub_rate_range, size=nh)
    trend = rng.normal(0.0, spec.hub_trend_sd, size=nh)
    shift = rng.uniform(-spec.peak_shift, spec.peak_shift, size=nh)

    months = _table(spec.monthly, np.array([1.0, 1.08]), T // 4 + 1)
    weeks = _table(spec.weekly, np.array([1.0, 0.96, 1.04, 1.08]), 4)
    daily = _table(spec.daily, np.array([1.05, 1.0, 1.0, 1.05, 1.15, 0.9, 0.85]), days)
    if spec.hourly:
        hourly = np.tile(_table(spec.hourly, np.ones(1), H)[:, None], (1, nh))
    else:
        # hub-specific bell around mid-day, normalised to mean 1 per hub
        hourly = np.stack([_bell(H, (H - 1) / 2 + s, H / 4) for s in shift], axis=1)
        hourly /= hourly.mean(axis=0, keepdims=True)

    out = np.empty((T * days * H, nh))
    for t in range(T):
        level = months[t // 4] * weeks[t % 4] * np.exp(trend * t) * hub_rate
        for d in range(days):
            for h in range(H):
                out[(t * days + d) * H + h] = level * daily[d] * hourly[h]
    return out


def generate_scenarios(net: Network, spec: GenSpec, params: Optional[Parameters] = None) -> ScenarioSet:
    """Poisson pickups and deliveries around seasonal means with lognormal noise.

    Each scenario draws from its own child of ``scenario_seed`` so scenarios
    are reproducible individually.
    """
    params = params or make_parameters(spec)
    means = demand_means(net, spec)
    seed = spec.seed if spec.scenario_seed is None else spec.scenario_seed
    children = np.random.SeedSequence([seed, 1]).spawn(spec.n_scenarios)
    n_ops, nh = means.shape
    pk = np.empty((spec.n_scenarios, n_ops, nh))
    dl = np.empty_like(pk)
    s = spec.noise_sigma
    for w, child in enumerate(children):
        rng = np.random.default_rng(child)
        noise = np.exp(rng.normal(-s * s / 2, s, size=(2, n_ops, nh)))
        pk[w] = rng.poisson(means * noise[0])
        dl[w] = rng.poisson(means * noise[1])
    volume = (pk + dl) * spec.parcel_footprint * spec.dwell_factor
    riders, couriers = workforce(net, params, pk + dl, spec.headroom)
    prob = np.full(spec.n_scenarios, 1.0 / spec.n_scenarios)
    return ScenarioSet(prob, pk, dl, volume, riders, couriers)


def _ceil(x):
    return np.ceil(x - 1e-9)


def workforce(net: Network, params: Parameters, stops: np.ndarray, headroom: float):
    """Riders per cell and couriers per hub for every (scenario, period).

    Vectorised :func:`approx.rider_workforce` / :func:`approx.courier_workforce`.
    """
    dens = np.array([d for c in net.cells for d in c.hub_density])
    order = np.concatenate(net.cell_hubs)
    hub_dens = np.empty(len(net.hubs))
    hub_dens[order] = dens
    per_stop = np.array([approx.courier_stop_time(d, params) for d in hub_dens])
    m = np.where(stops > 0, np.maximum(1.0, _ceil(stops * per_stop / params.period_length)), 0.0)
    couriers = _ceil(m * (1.0 + headroom))

    riders = np.zeros(stops.shape[:2] + (len(net.cells),))
    for c, (cell, members) in enumerate(zip(net.cells, net.cell_hubs)):
        load = stops[:, :, members].sum(axis=2)
        variable = cell.n_hubs * approx.rider_detour_time(cell, params) + load * params.rider_handling_time
        usable = params.period_length - approx.rider_fixed_time(cell, params)
        if usable <= 0:
            raise approx.DomainError(f"cell {cell.id}: rider fixed time exceeds the period length")
        need = _ceil(np.maximum(1.0, _ceil(variable / usable)) * (1.0 + headroom))
        riders[:, :, c] = np.where(load > 0, need, 0.0)
    return riders, couriers


# ----------------------------------------------------------------- file I/O

def instance_to_dict(net: Network, params: Parameters, scen: ScenarioSet) -> dict:
    return {"format_version": FORMAT_VERSION, "network": network_to_dict(net),
            "parameters": params.to_dict(), "scenarios": scenarios_to_dict(scen)}


def instance_from_dict(d: dict):
    if not isinstance(d, dict):
        raise InstanceError("instance: top level must be an object")
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise InstanceError(f"instance: unsupported format_version {version!r} "
                            f"(expected {FORMAT_VERSION})")
    for key in ("network", "parameters", "scenarios"):
        if key not in d:
            raise InstanceError(f"instance: missing section {key!r}")
    try:
        net = network_from_dict(d["network"])
        params = Parameters.from_dict(d["parameters"])
        scen = scenarios_from_dict(d["scenarios"])
    except (ValidationError, TypeError, ValueError) as exc:
        raise InstanceError(f"instance: {exc}") from exc
    errs = validate_network(net) + scenario_violations(net, params, scen)
    if errs:
        raise InstanceError("instance: " + "; ".join(errs[:10]))
    return net, params, scen


def save_instance(path, net: Network, params: Parameters, scen: ScenarioSet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(instance_to_dict(net, params, scen)))
    tmp.replace(path)


def _read_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InstanceError(f"{path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def load_instance(path):
    """Read ``(Network, Parameters, ScenarioSet)`` written by :func:`save_instance`."""
    try:
        return instance_from_dict(_read_json(path))
    except InstanceError as exc:
        if str(exc).startswith(str(path)):
            raise
        raise InstanceError(f"{path}: {exc}") from exc


def load_genspec(path) -> GenSpec:
    d = _read_json(path)
    try:
        return GenSpec.from_dict(d)
    except (ValidationError, TypeError) as exc:
        raise InstanceError(f"{path}: {exc}") from exc


def build_instance(spec: GenSpec):
    """Network, parameters and scenarios for ``spec``."""
    net = generate_network(spec)
    params = make_parameters(spec)
    return net, params, generate_scenarios(net, spec, params)
