import json

import numpy as np
import pytest

from pooledcap import approx
from pooledcap.instances import (GenSpec, InstanceError, build_instance, demand_means,
                                 generate_network, generate_scenarios, holding_cost,
                                 instance_to_dict, load_genspec, load_instance, save_instance)
from pooledcap.model import ValidationError, validate_network


def small(**kw):
    base = dict(n_hubs=5, n_cells=1, area=4.0, n_scenarios=4, n_periods=2, days_per_week=2,
                hours_per_day=3, seed=3)
    base.update(kw)
    return GenSpec(**base)


def test_holding_cost_formula():
    assert holding_cost(0.10) == pytest.approx(90.1923, abs=1e-4)


def test_instance_a_network():
    net = generate_network(GenSpec(label="A", seed=1))
    assert len(net.hubs) == 39 and len(net.cells) == 1
    assert net.cells[0].area == pytest.approx(24.2)
    assert validate_network(net) == []
    assert net.depots[0].holding_cost == 0.0
    h = net.holding_costs[net.hub_loc]
    assert np.all(h >= 2000 / 260 + 75 * 1.02 - 1e-9)
    assert np.all(h <= 2000 / 260 + 75 * 1.15 + 1e-9)
    arc = net.relocation_arcs[0]
    assert arc.cost == pytest.approx(1.5 * arc.distance + 40)


def test_multi_cell_layout():
    net = generate_network(GenSpec(label="C", seed=2))
    assert len(net.hubs) == 138 and len(net.cells) == 4
    assert validate_network(net) == []
    for a in net.pooling_arcs:
        assert a.distance <= 1.0


def test_zero_base_rate_gives_zero_demand():
    net, _, scen = build_instance(small(base_rate=0.0, monthly=(1,), weekly=(1,), daily=(1,),
                                        hourly=(1,)))
    assert not scen.pickups.any() and not scen.deliveries.any()
    assert not scen.riders.any() and not scen.couriers.any()


def test_same_seed_is_bit_identical():
    a = build_instance(small())[2]
    b = build_instance(small())[2]
    assert a == b
    c = build_instance(small(scenario_seed=99))[2]
    assert not a == c


def test_scenarios_are_drawn_independently():
    # the first scenarios do not depend on how many are requested
    a = build_instance(small(n_scenarios=2))[2]
    b = build_instance(small(n_scenarios=5))[2]
    np.testing.assert_array_equal(a.pickups, b.pickups[:2])


def test_pickup_mean_matches_configured_mean():
    spec = small(n_hubs=1, area=1.0, n_scenarios=10_000, n_periods=1, days_per_week=1,
                 hours_per_day=2, base_rate=20.0, hub_rate_range=(1.0, 1.0), hub_trend_sd=0.0,
                 monthly=(1.2,), weekly=(0.9,), daily=(1.1,), hourly=(0.8, 1.25))
    net = generate_network(spec)
    mean = demand_means(net, spec)
    np.testing.assert_allclose(mean[:, 0], 20 * 1.2 * 0.9 * 1.1 * np.array([0.8, 1.25]))
    scen = generate_scenarios(net, spec)
    np.testing.assert_allclose(scen.pickups.mean(axis=0), mean, rtol=0.02)


def test_volume_and_workforce_follow_counts():
    spec = small()
    net, params, scen = build_instance(spec)
    np.testing.assert_allclose(scen.volume, (scen.pickups + scen.deliveries) * 0.06 * 2.0)
    cell = net.cells[0]
    for w in range(scen.n_scenarios):
        for k in range(scen.n_ops):
            load = scen.stops[w, k].sum()
            assert scen.riders[w, k, 0] == approx.rider_workforce(cell, params, load, 0.10)
            for h in range(len(net.hubs)):
                assert scen.couriers[w, k, h] == approx.courier_workforce(
                    cell.hub_density[h], params, scen.stops[w, k, h], 0.10)


def test_save_load_round_trip(tmp_path):
    net, params, scen = build_instance(small())
    path = tmp_path / "inst.json"
    save_instance(path, net, params, scen)
    net2, params2, scen2 = load_instance(path)
    assert net2 == net and params2 == params and scen2 == scen


def test_unknown_format_version(tmp_path):
    net, params, scen = build_instance(small())
    d = instance_to_dict(net, params, scen)
    d["format_version"] = 99
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    with pytest.raises(InstanceError, match="format_version"):
        load_instance(path)


def test_negative_demand_rejected(tmp_path):
    net, params, scen = build_instance(small())
    d = instance_to_dict(net, params, scen)
    d["scenarios"]["pickups"][0][0][0] = -1
    path = tmp_path / "neg.json"
    path.write_text(json.dumps(d))
    with pytest.raises(InstanceError, match="negative"):
        load_instance(path)


def test_parse_error_has_line_context(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "format_version": 1,\n  oops\n}')
    with pytest.raises(InstanceError, match=r"broken\.json:3:"):
        load_instance(path)


def test_genspec_validation_and_file(tmp_path):
    with pytest.raises(ValidationError):
        GenSpec(n_hubs=0)
    with pytest.raises(ValidationError):
        GenSpec(daily=(1.0, 0.0))
    with pytest.raises(ValidationError):
        GenSpec(label="Z")
    spec = small(daily=(1.0, 0.5))
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert load_genspec(path) == spec
    path.write_text(json.dumps({"n_hubs": 3, "colour": "red"}))
    with pytest.raises(InstanceError, match="colour"):
        load_genspec(path)
