import numpy as np
import pytest

from helpers import make_network, tiny_instance
from oracles import brute_force_plan, expected_recourse_oracle, second_stage_oracle
from pooledcap.extensive import build_extensive, solve_extensive
from pooledcap.model import Parameters, ScenarioSet, plan_violations


def depot_start(net, total):
    init = np.zeros(len(net.locations))
    init[net.depot_loc[0]] = total
    return init


@pytest.mark.parametrize("seed,distance", [(0, 0.0), (1, 5.0), (4, 5.0)])
def test_matches_enumeration_of_every_deployment(seed, distance):
    net, p, scen = tiny_instance(seed, distance, n_hubs=3, n_cells=1, total_modules=4,
                                 max_modules=2, rate=4.0)
    init = depot_start(net, 4)
    expected = brute_force_plan(net, p, scen, [0, 1], init)
    plan, rec, obj = solve_extensive(net, p, scen, [0, 1], init, gap=1e-9)
    assert obj == pytest.approx(expected, rel=1e-7)
    assert plan.objective == pytest.approx(obj, rel=1e-9)
    assert plan_violations(net, p, plan, init) == []


def test_free_initial_placement_drops_first_balance():
    net, p, scen = tiny_instance(2, 5.0, n_hubs=3, n_cells=1, total_modules=4, max_modules=2,
                                 rate=4.0)
    expected = brute_force_plan(net, p, scen, [0])
    plan, _, obj = solve_extensive(net, p, scen, [0], None, gap=1e-9)
    assert obj == pytest.approx(expected, rel=1e-7)
    assert plan.R.sum() == 0


def test_fixed_deployment_recourse_matches_direct_lp():
    net, p, scen = tiny_instance(3, 5.0, n_hubs=4, n_cells=2, total_modules=8)
    rng = np.random.default_rng(3)
    S = np.zeros((2, len(net.locations)))
    for t in range(2):
        S[t, net.hub_loc] = rng.integers(0, 3, size=len(net.hubs))
        S[t, net.depot_loc[0]] = 8 - S[t, net.hub_loc].sum()
    plan, rec, obj = solve_extensive(net, p, scen, [0, 1], None, fixed_S=S)
    ops = list(range(6))
    expected = expected_recourse_oracle(net, p, scen, ops, [S[k // 3, net.hub_loc] for k in ops])
    assert plan.recourse == pytest.approx(expected, rel=1e-7, abs=1e-7)


def test_zero_demand_costs_nothing():
    net, p, scen = tiny_instance(5, 5.0, n_hubs=3, n_cells=1, total_modules=4)
    z = np.zeros_like(scen.volume)
    scen = ScenarioSet(scen.probabilities, z, z, z, np.zeros_like(scen.riders), z)
    init = depot_start(net, 4)
    plan, rec, obj = solve_extensive(net, p, scen, [0, 1], init)
    assert obj == 0.0
    assert np.all(plan.S[:, net.hub_loc] == 0)


def test_shortfall_when_cap_binds():
    net = make_network({"H1": (0.0, 0.0, "LC1")}, max_modules=1, n_depot_modules=3)
    p = Parameters(n_periods=1, ops_per_period=1, total_modules=3)
    one = np.ones((1, 1, 1))
    vol = np.full((1, 1, 1), 2.0)
    scen = ScenarioSet([1.0], one * 5, one * 5, vol, np.ones((1, 1, 1)), one * 2)
    plan, rec, obj = solve_extensive(net, p, scen, [0], None)
    assert plan.S[0, net.hub_loc[0]] == 1
    short = 2.0 - 0.75
    assert rec.shortfall[0, 0, 0] == pytest.approx(short)
    assert obj == pytest.approx(net.holding_costs[0] + p.shortfall_penalty * short)


def test_emitted_slacks_are_nonnegative():
    for seed in range(4):
        net, p, scen = tiny_instance(seed, 5.0)
        _, rec, _ = solve_extensive(net, p, scen, [0, 1], None)
        assert rec.rider_slack.min() >= -1e-9
        assert rec.courier_slack.min() >= -1e-9


def test_slacks_agree_with_direct_lp_when_unique():
    net, p, scen = tiny_instance(6, 0.0, n_hubs=3, n_cells=1)
    _, rec, _ = solve_extensive(net, p, scen, [0], None)
    # without pooling arcs no detours run: slack is the nominal slack
    for w in range(scen.n_scenarios):
        for k in range(3):
            _, rs, cs = second_stage_oracle(net, p, scen, w, k, np.zeros(len(net.hubs)))
            assert rec.rider_slack[w, k, 0] == pytest.approx(max(rs[0], 0.0), abs=1e-9)
            for h, val in cs.items():
                assert rec.courier_slack[w, k, h] == pytest.approx(max(val, 0.0), abs=1e-9)


def test_rejects_non_consecutive_periods():
    net, p, scen = tiny_instance(0, 5.0)
    with pytest.raises(ValueError, match="consecutive"):
        build_extensive(net, p, scen, [0, 2])
