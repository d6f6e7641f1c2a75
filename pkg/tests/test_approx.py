import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pooledcap import approx
from pooledcap.approx import DomainError, OpsSnapshot
from pooledcap.model import LocalCell, Parameters

P = Parameters()


def cell(n=9, area=9.0, r=3.0, density=100.0):
    return LocalCell("C1", tuple(f"H{i}" for i in range(n)), area, r, tuple([density] * n))


def test_vrp_length_examples():
    assert approx.vrp_length(2, 3, 100, 1, 25) == pytest.approx(32.0)
    assert approx.vrp_length(7, 0, 0, 1, 4) == 0.0
    assert approx.vrp_length(0, 5, 10, 0.82, 4) == pytest.approx(4.1)
    with pytest.raises(DomainError):
        approx.vrp_length(1, 1, 3, 1, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 50), st.floats(0.1, 2), st.floats(0.1, 100),
       st.floats(0, 5))
def test_vrp_length_monotone(r, m, n, k, dens, bump):
    base = approx.vrp_length(r, m, n, k, dens)
    assert base >= 0
    assert approx.vrp_length(r + bump, m, n, k, dens) >= base - 1e-12
    assert approx.vrp_length(r, m + bump, n, k, dens) >= base - 1e-12
    assert approx.vrp_length(r, m, n + bump, k, dens) >= base - 1e-12
    assert approx.vrp_length(r, m, n, k + bump, dens) >= base - 1e-12
    assert approx.vrp_length(r, m, n, k, dens + bump) <= base + 1e-12


def test_rider_route_length_example():
    c = cell(n=9, area=9.0, r=3.0)  # density 1 hub/km^2
    assert approx.rider_route_length(c, P, 2, 1) == pytest.approx(20.2)
    step = approx.rider_route_length(c, P, 2, 2) - approx.rider_route_length(c, P, 2, 1)
    assert step == pytest.approx(0.82)


def test_rider_time_fixed_part():
    empty = LocalCell("C0", (), 1.0, 3.0, ())
    p = Parameters(rider_setup_time=1 / 12)
    assert approx.rider_time(empty, p, 0.0, 1) == pytest.approx(1 / 12 + 6 / 50)


def test_rider_per_detour_time_with_defaults():
    assert approx.rider_detour_time(cell(area=9.0), P) == pytest.approx(0.82 / 30 + 1 / 12)
    assert approx.rider_detour_time(cell(area=9.0), P) == pytest.approx(0.110667, abs=1e-6)


def test_rider_marginal_example():
    dc, dt = approx.rider_marginal(cell(area=9.0), P, 2)
    assert dt == pytest.approx(0.221333, abs=1e-6)
    assert dc == pytest.approx(2 * 0.82 * 1.8 + dt * 20)
    assert dc == pytest.approx(7.3787, abs=1e-4)
    assert approx.rider_marginal(cell(), P, 0) == (0.0, 0.0)


def test_courier_examples():
    assert approx.courier_route_length(100, P, 0) == 0.0
    assert approx.courier_route_length(100, P, 0, [(0.5, 1)]) == pytest.approx(1.0)
    assert approx.courier_route_length(100, P, 50) == pytest.approx(5.75)
    dc, dt = approx.courier_marginal(P, [(0.5, 1)])
    assert dt == pytest.approx(1 / 15 + 1 / 60)
    assert dc == pytest.approx(0.8 + dt * 20)
    assert dc == pytest.approx(2.4667, abs=1e-4)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 20), st.floats(0.5, 50), st.floats(0, 5), st.floats(0, 400),
       st.integers(1, 6), st.floats(0, 10), st.floats(10, 5000))
def test_marginal_identities(n, area, r, load, riders, detours, dens):
    c = cell(n=n, area=area, r=r, density=dens)
    dc, dt = approx.rider_marginal(c, P, detours)
    full = approx.rider_cost(c, P, load, riders, detours)
    base = approx.rider_cost(c, P, load, riders, 0.0)
    assert dc == pytest.approx(full - base, rel=1e-9, abs=1e-9)
    assert dt == pytest.approx(approx.rider_time(c, P, load, riders, detours)
                               - approx.rider_time(c, P, load, riders), rel=1e-9, abs=1e-9)
    arcs = [(0.3 + 0.1 * i, detours / (i + 1)) for i in range(3)]
    dc, dt = approx.courier_marginal(P, arcs)
    assert dc == pytest.approx(approx.courier_cost(dens, P, load, arcs)
                               - approx.courier_cost(dens, P, load), rel=1e-9, abs=1e-9)
    assert dt == pytest.approx(approx.courier_time(dens, P, load, arcs)
                               - approx.courier_time(dens, P, load), rel=1e-9, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 200), st.integers(1, 5), st.floats(0, 5))
def test_sync_slack_affine_in_detours(load, m, n):
    c = cell()
    per = approx.rider_detour_time(c, P)
    s0 = approx.rider_sync(c, P, load, m, n).slack
    s1 = approx.rider_sync(c, P, load, m, n + 1).slack
    assert s0 - s1 == pytest.approx(per, rel=1e-9)
    per_c = approx.courier_arc_time(0.7, P)
    c0 = approx.courier_sync(100, P, load, m, [(0.7, n)]).slack
    c1 = approx.courier_sync(100, P, load, m, [(0.7, n + 1)]).slack
    assert c0 - c1 == pytest.approx(per_c, rel=1e-9)


def test_sync_zero_workload():
    check = approx.sync_feasible(0.0, 0, 1.0)
    assert check.feasible and check.slack == 0.0
    c = cell()
    assert approx.rider_sync(c, P, 0.0, 0).feasible


def test_minimum_workforce_examples():
    assert approx.minimum_workforce(0.0, 1.0) == 0
    assert approx.minimum_workforce(1.7, 1.0) == 2
    assert approx.minimum_workforce(1.7, 1.0, headroom=0.25) == 3
    with pytest.raises(DomainError):
        approx.minimum_workforce(1.0, 1.0, per_agent_time=1.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.5, 20), st.floats(0, 3), st.floats(0, 600), st.floats(10, 5000),
       st.floats(0, 0.5))
def test_nominal_operations_fit_minimum_workforce(area, r, load, dens, headroom):
    c = cell(area=area, r=r, density=dens)
    m = approx.rider_workforce(c, P, load, headroom)
    assert approx.rider_sync(c, P, load, m).feasible
    mc = approx.courier_workforce(dens, P, load, headroom)
    assert approx.courier_sync(dens, P, load, mc).feasible


def test_rider_workforce_rejects_long_linehaul():
    with pytest.raises(DomainError):
        approx.rider_workforce(cell(r=30.0), P, 10.0, 0.1)


def test_snapshot_sync_and_validation():
    c = cell(n=2, area=2.0, r=1.0)
    snap = OpsSnapshot(c, [3, 4], [2, 1], riders=1, couriers=[1, 1])
    rider, couriers = approx.snapshot_sync(snap, P)
    assert rider.feasible and len(couriers) == 2
    assert rider.slack == pytest.approx(1.0 - approx.rider_time(c, P, 10, 1))
    with pytest.raises(DomainError):
        OpsSnapshot(c, [-1, 0], [0, 0], 1, [1, 1])


def test_no_tour_without_riders():
    c = cell()
    assert approx.rider_time(c, P, 0.0, 0) == 0.0
    assert math.isclose(approx.rider_cost(c, P, 0.0, 0), 0.0)
    assert approx.rider_route_length(c, P, 0) == 0.0
