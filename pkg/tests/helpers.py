"""Small hand-built networks and random programs shared by the tests."""
import math

import numpy as np

from pooledcap.lp import EQ, GE, LE, LinearProgram
from pooledcap.model import DEPOT, HUB, LocalCell, Location, Network, derive_arc_sets


def make_network(hubs, depot=(0.0, 0.0), pooling_distance=1.0, density=1000.0, holding=None,
                 max_modules=15, n_depot_modules=100):
    """``hubs`` maps hub id -> (x, y, cell id); one depot ``W1`` at ``depot``."""
    cells = {}
    for hid, (x, y, cid) in hubs.items():
        cells.setdefault(cid, []).append((hid, x, y))
    locs = []
    for i, (hid, (x, y, cid)) in enumerate(hubs.items()):
        h = holding[i] if holding is not None else 90.0
        locs.append(Location(hid, HUB, x, y, cid, 0.1, max_modules, h))
    locs.append(Location("W1", DEPOT, depot[0], depot[1], None, 0.0, n_depot_modules, 0.0))
    cell_objs = []
    for cid, members in cells.items():
        cx = sum(m[1] for m in members) / len(members)
        cy = sum(m[2] for m in members) / len(members)
        r = sum(math.hypot(m[1] - cx, m[2] - cy) for m in members) / len(members)
        cell_objs.append(LocalCell(cid, tuple(m[0] for m in members), 1.0 * len(members), r,
                                   tuple([density] * len(members)), (cx, cy)))
    return derive_arc_sets(Network(tuple(locs), tuple(cell_objs), ()), pooling_distance)


def tiny_instance(seed, pooling_distance=5.0, n_hubs=None, n_cells=None, n_scenarios=None,
                  total_modules=None, max_modules=None, rate=6.0, n_periods=2, ops_per_period=3):
    """Random desk-size instance: at most 6 hubs, one depot, up to 2 cells.

    Hub caps are kept low relative to demand so that pooling and shortfall
    both show up.  Returns ``(net, params, scen)``.
    """
    from pooledcap.instances import workforce
    from pooledcap.model import Parameters, ScenarioSet

    rng = np.random.default_rng(seed)
    n_hubs = n_hubs or int(rng.integers(2, 7))
    n_cells = n_cells or int(rng.integers(1, 3))
    n_cells = min(n_cells, n_hubs)
    n_scenarios = n_scenarios or int(rng.integers(2, 4))
    hubs = {}
    for i in range(n_hubs):
        x, y = rng.uniform(0.0, 1.5, size=2)
        hubs[f"H{i}"] = (float(x), float(y), f"LC{i % n_cells}")
    holding = rng.uniform(80.0, 95.0, size=n_hubs)
    cap = max_modules if max_modules is not None else int(rng.integers(2, 5))
    total = total_modules if total_modules is not None else n_hubs * 2
    net = make_network(hubs, depot=(0.75, 0.75), pooling_distance=pooling_distance,
                       holding=holding, max_modules=cap, n_depot_modules=total)
    params = Parameters(n_periods=n_periods, ops_per_period=ops_per_period,
                        total_modules=total)
    n_ops = n_periods * ops_per_period
    shape = (n_scenarios, n_ops, n_hubs)
    pickups = rng.poisson(rate, size=shape).astype(float)
    deliveries = rng.poisson(rate, size=shape).astype(float)
    volume = (pickups + deliveries) * 0.06 * 2.0
    riders, couriers = workforce(net, params, pickups + deliveries, 0.10)
    prob = rng.uniform(0.5, 1.5, size=n_scenarios)
    scen = ScenarioSet(prob / prob.sum(), pickups, deliveries, volume, riders, couriers)
    return net, params, scen


def random_lp(rng, n=None, m=None, degenerate=False):
    """Feasible bounded LP plus its ``G x <= h, E x = e`` oracle form."""
    n = n or int(rng.integers(2, 8))
    m = m or int(rng.integers(1, 5))
    A = rng.integers(-4, 5, size=(m, n)).astype(float)
    lo = rng.integers(-2, 1, size=n).astype(float)
    hi = lo + rng.integers(1, 5, size=n)
    x0 = lo + rng.random(n) * (hi - lo)
    senses = rng.choice([LE, GE, EQ], size=m, p=[0.5, 0.3, 0.2])
    gap = rng.random(m) * (0.0 if degenerate else 2.0)
    rhs = A @ x0 + np.where(senses == LE, gap, np.where(senses == GE, -gap, 0.0))
    c = rng.integers(-5, 6, size=n).astype(float)
    lp = LinearProgram(c, A, senses, rhs, lo, hi, np.zeros(n, bool))
    G = [A[i] if s == LE else -A[i] for i, s in enumerate(senses) if s != EQ]
    h = [rhs[i] if s == LE else -rhs[i] for i, s in enumerate(senses) if s != EQ]
    G = np.vstack(G + [-np.eye(n), np.eye(n)]) if G else np.vstack([-np.eye(n), np.eye(n)])
    h = np.concatenate([np.array(h, float), -lo, hi])
    E = A[senses == EQ]
    e = rhs[senses == EQ]
    return lp, (c, G, h, E, e)


def random_mip(rng, mixed, n=None, m=None):
    """Feasible bounded MIP plus its enumeration-oracle arguments."""
    n = n or int(rng.integers(2, 5))
    m = m or int(rng.integers(1, 4))
    G = rng.integers(-3, 4, size=(m, n)).astype(float)
    lo = rng.integers(-2, 1, size=n).astype(float)
    hi = lo + rng.integers(1, 4, size=n)
    x0 = rng.integers(lo, hi + 1).astype(float)
    h = G @ x0 + rng.random(m) * 2
    c = rng.normal(size=n).round(3)
    integer = np.ones(n, bool)
    cont = None
    if mixed:
        cont = int(rng.integers(n))
        integer[cont] = False
    lp = LinearProgram(c, G, [LE] * m, h, lo, hi, integer)
    return lp, (c, G, h, lo, hi, cont)
