import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svropf.errors import CycleError, PhaseMismatch, SchemaError, UnitsError
from svropf.netmodel import PhaseMask, SWITCH_IMPEDANCE, dumps, parse_feeder, radial_order, to_dict

from conftest import BALANCED, Z3, pmat, pvec, svr_doc, two_bus_doc


def test_phase_mask_shifts():
    m = PhaseMask("abc")
    assert [m.right(p) for p in m] == [1, 2, 0]
    assert [m.left(p) for p in m] == [2, 0, 1]
    ac = PhaseMask("ca")
    assert str(ac) == "ac"
    assert ac.right_present(0) == 2 and ac.right_present(2) == 0
    with pytest.raises(ValueError):
        PhaseMask("")


def test_two_bus_counts():
    net = parse_feeder(json.dumps(two_bus_doc()))
    assert len(net.buses) == 2 and len(net.lines) == 1 and len(net.svrs) == 0
    assert np.allclose(net.slack_voltage, BALANCED)


def test_open_delta_on_two_phase_bus_rejected():
    doc = svr_doc("open_delta")
    doc["buses"][2]["phases"] = "ab"
    doc["buses"][2]["load_s"] = pvec([0.1, 0.1])
    with pytest.raises(PhaseMismatch):
        parse_feeder(doc)


def test_edge_with_absent_phase_rejected():
    doc = two_bus_doc()
    doc["buses"][1]["phases"] = "ab"
    doc["buses"][1]["load_s"] = pvec([0.1, 0.1])
    doc["lines"][0]["phases"] = "abc"
    with pytest.raises(PhaseMismatch):
        parse_feeder(doc)


def test_schema_errors():
    with pytest.raises(SchemaError):
        parse_feeder("{not json")
    doc = two_bus_doc()
    doc["lines"][0]["to"] = 7
    with pytest.raises(SchemaError):
        parse_feeder(doc)
    doc = two_bus_doc()
    del doc["slack"]
    with pytest.raises(SchemaError):
        parse_feeder(doc)
    doc = two_bus_doc()
    doc["lines"][0]["from"], doc["lines"][0]["to"] = 1, 0
    with pytest.raises(SchemaError):
        parse_feeder(doc)


def test_ohmic_line_without_base_rejected():
    doc = two_bus_doc()
    doc["lines"][0]["units"] = "ohm"
    with pytest.raises(UnitsError):
        parse_feeder(doc)


def test_ohmic_conversion():
    doc = two_bus_doc()
    doc["base"] = {"s_base_kva": 1000.0, "v_base_kv_per_region": {"default": 2.0}}
    doc["lines"][0]["units"] = "ohm"
    doc["buses"][1]["units"] = "si"
    doc["buses"][1]["load_s"] = pvec([300 + 100j, 200, 100])
    net = parse_feeder(doc)
    z_base = 2.0**2 * 1e3 / 1000.0
    assert np.allclose(net.lines[0].z, Z3 / z_base)
    assert np.allclose(net.buses[1].load, [0.3 + 0.1j, 0.2, 0.1])


def test_switch_becomes_short_line():
    doc = two_bus_doc()
    doc["buses"].append({"id": 2, "phases": "abc"})
    doc["switches"] = [{"from": 1, "to": 2}]
    net = parse_feeder(doc)
    assert np.allclose(net.lines[-1].z, SWITCH_IMPEDANCE * np.eye(3))


def test_ieee13_structure(ieee13):
    # 15 nodes (incl. regulator output and node 670 on the distributed-load segment), 13 line
    # edges (11 segments, one transformer, one switch) and one regulator edge
    assert len(ieee13.buses) == 15 and len(ieee13.lines) == 13 and len(ieee13.svrs) == 1
    sizes = sorted({len(b.phases) for b in ieee13.buses.values()})
    assert sizes == [1, 2, 3]
    names = {b.name: b for b in ieee13.buses.values()}
    assert str(names["611"].phases) == "c" and str(names["684"].phases) == "ac"
    assert str(names["645"].phases) == "bc"
    total = sum(np.sum(b.load) for b in ieee13.buses.values()) * ieee13.s_base_kva
    assert total.real == pytest.approx(3466.0)
    assert total.imag == pytest.approx(2102.0)
    assert radial_order(ieee13).radial


def test_ieee37_structure(ieee37):
    assert len(ieee37.svrs) == 1 and ieee37.svrs[0].spec.svr_type == "wye"
    total = sum(np.sum(b.load) for b in ieee37.buses.values()) * ieee37.s_base_kva
    assert total.real == pytest.approx(2457.0)
    assert radial_order(ieee37).radial


def test_radial_order_examples():
    net = parse_feeder(two_bus_doc())
    order = radial_order(net)
    assert order.pairs == [(0, 1)] and order.radial

    doc = two_bus_doc()
    doc["buses"] += [{"id": 2, "phases": "abc"}, {"id": 3, "phases": "abc"}]
    doc["lines"] += [{"from": 1, "to": 2, "z_matrix": pmat(Z3)}, {"from": 2, "to": 3, "z_matrix": pmat(Z3)}]
    path = parse_feeder(doc)
    assert radial_order(path).pairs == [(0, 1), (1, 2), (2, 3)]

    doc["lines"].append({"from": 1, "to": 3, "z_matrix": pmat(Z3)})
    meshed = parse_feeder(doc)
    assert not radial_order(meshed).radial
    with pytest.raises(CycleError):
        radial_order(meshed, strict=True)


@pytest.mark.parametrize("name", ["tiny4_wye", "tiny4_cdelta", "tiny4_odelta", "ieee13", "ieee37"])
def test_round_trip_and_visits(name):
    from conftest import FEEDERS
    from svropf.netmodel import load_feeder

    net = load_feeder(FEEDERS / f"{name}.json")
    again = parse_feeder(dumps(net))
    assert again == net
    # per-unit idempotence: a second normalization changes nothing
    assert parse_feeder(to_dict(again)) == again
    order = radial_order(net)
    visited = [0] + [m for _, m in order.pairs]
    assert sorted(visited) == sorted(net.buses)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 12), seed=st.integers(0, 10_000))
def test_random_trees_visit_every_bus_once(n, seed):
    rng = np.random.default_rng(seed)
    doc = {"slack": {"bus": 0, "voltage_phasors": pvec(BALANCED)},
           "buses": [{"id": i, "phases": "abc"} for i in range(n)], "lines": []}
    for m in range(1, n):
        doc["lines"].append({"from": int(rng.integers(0, m)), "to": m, "z_matrix": pmat(Z3)})
    net = parse_feeder(doc)
    order = radial_order(net, strict=True)
    downstream = [m for _, m in order.pairs]
    assert len(downstream) == len(set(downstream)) == n - 1
    seen = {0}
    for a, b in order.pairs:
        assert a in seen
        seen.add(b)
