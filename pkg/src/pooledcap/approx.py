"""Continuous approximations of rider and courier operations.

Route lengths follow the classic line-haul plus tour estimate
``2 r m + n k / sqrt(density)``.  Riders tour the hubs of a local cell from
the local hub; couriers tour the pickup/delivery points around one hub and
make out-and-back detours along pooling arcs.  Every quantity is affine in
the detour counts, which is what lets the recourse problem stay an LP.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .model import LocalCell, Parameters


class DomainError(ValueError):
    """Approximation evaluated outside its domain (nonpositive density or speed)."""


class SyncCheck(NamedTuple):
    feasible: bool
    slack: float


@dataclass(frozen=True)
class OpsSnapshot:
    """Inputs of one local cell for one (operational period, scenario)."""

    cell: LocalCell
    pickups: Sequence[float]
    deliveries: Sequence[float]
    riders: float
    couriers: Sequence[float]
    rider_detours: float = 0.0
    # per member hub: list of (arc distance, courier detours) on its pooling arcs
    courier_detours: Sequence[Sequence[tuple]] = ()

    def __post_init__(self):
        vals = [*self.pickups, *self.deliveries, self.riders, *self.couriers, self.rider_detours]
        vals += [n for arcs in self.courier_detours for _, n in arcs]
        if any(v < 0 for v in vals):
            raise DomainError("snapshot values must be >= 0")

    @property
    def workload(self) -> float:
        return float(sum(self.pickups) + sum(self.deliveries))


def _inv_sqrt(density: float) -> float:
    if not density > 0:
        raise DomainError(f"density must be > 0, got {density}")
    return density ** -0.5


def vrp_length(r: float, m: float, n: float, k: float, density: float) -> float:
    """Expected total length of ``m`` routes visiting ``n`` points."""
    if n == 0:
        return 2.0 * r * m
    return 2.0 * r * m + n * k * _inv_sqrt(density)


# --------------------------------------------------------------------- riders

def _check_speeds(*speeds):
    if any(not s > 0 for s in speeds):
        raise DomainError("speeds must be > 0")


def rider_detour_length(cell: LocalCell, p: Parameters) -> float:
    return p.k_rider * _inv_sqrt(cell.density)


def rider_detour_time(cell: LocalCell, p: Parameters) -> float:
    """Hours added by one rider detour."""
    _check_speeds(p.rider_speed)
    return rider_detour_length(cell, p) / p.rider_speed + p.rider_stop_time


def rider_detour_cost(cell: LocalCell, p: Parameters) -> float:
    """Dollars added by one rider detour (vehicle plus labour)."""
    return rider_detour_length(cell, p) * p.rider_tour_cost + rider_detour_time(cell, p) * p.rider_wage


def _visits(cell: LocalCell, riders: float) -> int:
    # a cell without riders runs no tour at all
    return cell.n_hubs if riders > 0 else 0


def rider_route_length(cell: LocalCell, p: Parameters, riders: float, detours: float = 0.0) -> float:
    return vrp_length(cell.linehaul_radius, riders, _visits(cell, riders) + detours, p.k_rider,
                      cell.density)


def rider_fixed_time(cell: LocalCell, p: Parameters) -> float:
    """Per-rider setup plus line-haul time."""
    _check_speeds(p.rider_linehaul_speed)
    return p.rider_setup_time + 2.0 * cell.linehaul_radius / p.rider_linehaul_speed


def rider_time(cell: LocalCell, p: Parameters, workload: float, riders: float,
               detours: float = 0.0) -> float:
    """Cumulative rider-hours; ``workload`` is the cell's pickups plus deliveries."""
    stops = _visits(cell, riders) + detours
    touring = stops * rider_detour_time(cell, p) if stops else 0.0
    return riders * rider_fixed_time(cell, p) + touring + workload * p.rider_handling_time


def rider_cost(cell: LocalCell, p: Parameters, workload: float, riders: float,
               detours: float = 0.0) -> float:
    stops = _visits(cell, riders) + detours
    touring = stops * rider_detour_length(cell, p) * p.rider_tour_cost if stops else 0.0
    return (riders * (p.rider_fixed_cost + 2.0 * cell.linehaul_radius * p.rider_linehaul_cost)
            + touring + rider_time(cell, p, workload, riders, detours) * p.rider_wage)


def rider_marginal(cell: LocalCell, p: Parameters, detours: float) -> tuple:
    """(extra $, extra hours) caused by ``detours`` rider detours."""
    dt = detours * rider_detour_time(cell, p)
    dc = detours * rider_detour_length(cell, p) * p.rider_tour_cost + dt * p.rider_wage
    return dc, dt


# ------------------------------------------------------------------- couriers

def courier_stop_time(density: float, p: Parameters) -> float:
    """Hours per pickup/delivery: travel between stops, stopping and handling."""
    _check_speeds(p.courier_speed)
    return p.k_courier * _inv_sqrt(density) / p.courier_speed + p.courier_stop_time + p.courier_handling_time


def courier_arc_time(distance: float, p: Parameters) -> float:
    """Hours of one out-and-back courier detour along an arc."""
    _check_speeds(p.courier_detour_speed)
    return 2.0 * distance / p.courier_detour_speed + p.courier_stop_time


def courier_arc_cost(distance: float, p: Parameters) -> float:
    return 2.0 * distance * p.courier_detour_cost + courier_arc_time(distance, p) * p.courier_wage


def courier_route_length(density: float, p: Parameters, stops: float,
                         detours: Iterable[tuple] = ()) -> float:
    """``detours`` holds ``(arc distance, detour count)`` pairs."""
    tour = 0.0 if stops == 0 else stops * p.k_courier * _inv_sqrt(density)
    return tour + sum(2.0 * n * d for d, n in detours)


def courier_time(density: float, p: Parameters, stops: float,
                 detours: Iterable[tuple] = ()) -> float:
    nominal = 0.0 if stops == 0 else stops * courier_stop_time(density, p)
    return nominal + sum(n * courier_arc_time(d, p) for d, n in detours)


def courier_cost(density: float, p: Parameters, stops: float, detours: Iterable[tuple] = ()) -> float:
    detours = list(detours)
    tour = 0.0 if stops == 0 else stops * p.k_courier * _inv_sqrt(density) * p.courier_tour_cost
    return (tour + sum(2.0 * n * d for d, n in detours) * p.courier_detour_cost
            + courier_time(density, p, stops, detours) * p.courier_wage)


def courier_marginal(p: Parameters, detours: Iterable[tuple]) -> tuple:
    """(extra $, extra hours) of the given ``(distance, count)`` courier detours."""
    detours = list(detours)
    dt = sum(n * courier_arc_time(d, p) for d, n in detours)
    dc = sum(2.0 * n * d for d, n in detours) * p.courier_detour_cost + dt * p.courier_wage
    return dc, dt


# ------------------------------------------------------------ synchronization

def sync_feasible(time: float, workforce: float, period_length: float) -> SyncCheck:
    """Whether ``time`` agent-hours fit into ``workforce`` agents for one period."""
    if workforce < 0:
        raise DomainError("workforce must be >= 0")
    slack = workforce * period_length - time
    return SyncCheck(slack >= 0.0, slack)


def rider_sync(cell: LocalCell, p: Parameters, workload: float, riders: float,
               detours: float = 0.0) -> SyncCheck:
    return sync_feasible(rider_time(cell, p, workload, riders, detours), riders, p.period_length)


def courier_sync(density: float, p: Parameters, stops: float, couriers: float,
                 detours: Iterable[tuple] = ()) -> SyncCheck:
    return sync_feasible(courier_time(density, p, stops, detours), couriers, p.period_length)


def snapshot_sync(snap: OpsSnapshot, p: Parameters) -> tuple:
    """Rider check for the cell and one courier check per member hub."""
    rider = rider_sync(snap.cell, p, snap.workload, snap.riders, snap.rider_detours)
    arcs = snap.courier_detours or [()] * snap.cell.n_hubs
    couriers = [courier_sync(dens, p, pk + dl, m, det)
                for dens, pk, dl, m, det in zip(snap.cell.hub_density, snap.pickups,
                                                 snap.deliveries, snap.couriers, arcs)]
    return rider, couriers


def minimum_workforce(variable_time: float, period_length: float, headroom: float = 0.0,
                      per_agent_time: float = 0.0) -> int:
    """Fewest agents covering ``variable_time`` hours, inflated by ``headroom``.

    Each agent contributes ``period_length - per_agent_time`` usable hours
    (riders lose their setup and line-haul time).
    """
    if variable_time <= 0:
        return 0
    usable = period_length - per_agent_time
    if usable <= 0:
        raise DomainError("per-agent fixed time exceeds the period length")
    m = max(1, math.ceil(variable_time / usable - 1e-9))
    return math.ceil(m * (1.0 + headroom) - 1e-9)


def rider_workforce(cell: LocalCell, p: Parameters, workload: float, headroom: float) -> int:
    if workload <= 0:
        return 0
    variable = cell.n_hubs * rider_detour_time(cell, p) + workload * p.rider_handling_time
    return minimum_workforce(variable, p.period_length, headroom, rider_fixed_time(cell, p))


def courier_workforce(density: float, p: Parameters, stops: float, headroom: float) -> int:
    return minimum_workforce(courier_time(density, p, stops), p.period_length, headroom)
