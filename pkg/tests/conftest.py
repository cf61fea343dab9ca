import copy
import json
from pathlib import Path

import numpy as np
import pytest

from svropf import feeder_path
from svropf.netmodel import load_feeder, parse_feeder

FEEDERS = Path(str(feeder_path("ieee13"))).parent
A120 = np.exp(-2j * np.pi / 3)
BALANCED = np.array([1.0, A120, A120.conjugate()])


def pvec(v):
    return [[float(np.real(x)), float(np.imag(x))] for x in np.atleast_1d(v)]


def pmat(m):
    return [pvec(row) for row in np.atleast_2d(m)]


Z3 = np.array([[0.012 + 0.036j, 0.004 + 0.014j, 0.004 + 0.014j],
               [0.004 + 0.014j, 0.012 + 0.036j, 0.004 + 0.014j],
               [0.004 + 0.014j, 0.004 + 0.014j, 0.012 + 0.036j]])


def two_bus_doc(load=(0.3 + 0.1j, 0.2 + 0.1j, 0.25 + 0.05j), z=Z3):
    return {
        "name": "two_bus",
        "slack": {"bus": 0, "voltage_phasors": pvec(BALANCED)},
        "buses": [{"id": 0, "phases": "abc"}, {"id": 1, "phases": "abc", "load_s": pvec(load)}],
        "lines": [{"from": 0, "to": 1, "z_matrix": pmat(z)}],
    }


def svr_doc(svr_type="wye", variant="B", load=(0.3 + 0.1j, 0.2 + 0.1j, 0.25 + 0.05j), gang=False,
            delta=None, phases="abc"):
    """Slack, one line, one regulator and a loaded secondary bus: 0-line-1-SVR-2."""
    k = len(phases)
    doc = {
        "name": f"three_bus_{svr_type}",
        "slack": {"bus": 0, "voltage_phasors": pvec(BALANCED)},
        "buses": [{"id": 0, "phases": "abc"}, {"id": 1, "phases": "abc"},
                  {"id": 2, "phases": phases, "load_s": pvec(np.asarray(load)[:k])}],
        "lines": [{"from": 0, "to": 1, "z_matrix": pmat(Z3)}],
        "svrs": [{"from": 1, "to": 2, "type": svr_type, "variant": variant, "gang": gang}],
    }
    if delta is not None:
        doc["svrs"][0]["delta_deg"] = delta
    return doc


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def tiny4():
    return {t: load_feeder(FEEDERS / f"tiny4_{t}.json") for t in ("wye", "cdelta", "odelta")}


@pytest.fixture(scope="session")
def ieee13():
    return load_feeder(FEEDERS / "ieee13.json")


@pytest.fixture(scope="session")
def ieee37():
    return load_feeder(FEEDERS / "ieee37.json")


def parse(doc):
    return parse_feeder(copy.deepcopy(doc))


def dump(doc) -> str:
    return json.dumps(doc)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(criterion: int, ok: bool, detail: str):
        line = f"AC{criterion:>2} {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[2:4])):
            terminalreporter.write_line(line)
