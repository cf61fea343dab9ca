"""Forward-backward sweep load flow with fixed regulator ratios."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergence, NonRadial, PhaseMismatch, ZeroVoltage
from .netmodel import Network, radial_order
from .svrgain import gain_matrix

ZERO_VOLTAGE = 1e-6


@dataclass
class LoadFlowSolution:
    voltages: dict[int, np.ndarray]
    currents: dict[int, np.ndarray]
    secondary_currents: dict[int, np.ndarray]
    ratios: dict[int, np.ndarray]
    injections: dict[int, np.ndarray]
    iterations: int
    residual: float
    history: list[float] = field(default_factory=list)


@dataclass
class Metrics:
    power_import: float
    gap_percent: float | None
    v_min: float
    v_max: float
    unbalance: float
    phase_separation: float
    svr_separation: dict[int, float]
    svr_margin: dict[int, float]
    voltage_violation: float

    def as_dict(self) -> dict:
        return {
            "power_import": self.power_import,
            "gap_percent": self.gap_percent,
            "v_min": self.v_min,
            "v_max": self.v_max,
            "unbalance": self.unbalance,
            "phase_separation_deg": self.phase_separation,
            "svr_separation_deg": {str(k): v for k, v in self.svr_separation.items()},
            "svr_margin_deg": {str(k): v for k, v in self.svr_margin.items()},
            "voltage_violation": self.voltage_violation,
        }


def default_ratios(net: Network) -> dict[int, np.ndarray]:
    """Unit ratios for every regulator (tap 0), keyed like ``Network.edges``."""
    off = len(net.lines)
    return {off + k: np.ones(e.spec.size) for k, e in enumerate(net.svrs)}


def default_injections(net: Network) -> dict[int, np.ndarray]:
    return {b: -bus.load.astype(complex) for b, bus in net.buses.items()}


def normalize_ratios(net: Network, ratios) -> dict[int, np.ndarray]:
    """Accept a list in regulator order or a dict keyed by edge key."""
    off = len(net.lines)
    if ratios is None:
        return default_ratios(net)
    if isinstance(ratios, dict):
        out = default_ratios(net)
        for k, r in ratios.items():
            if k not in out:
                raise KeyError(f"edge {k} is not a regulator")
            out[k] = np.asarray(r, float).reshape(-1)
        return out
    ratios = list(ratios)
    if len(ratios) != len(net.svrs):
        raise ValueError(f"{len(ratios)} ratio vectors for {len(net.svrs)} regulators")
    return {off + k: np.asarray(r, float).reshape(-1) for k, r in enumerate(ratios)}


def sweep(net: Network, ratios=None, injections=None, tol: float = 1e-9,
          max_iter: int = 200, damping: float = 0.0) -> LoadFlowSolution:
    """Solve the radial feeder for fixed ratios and constant-power injections.

    ``injections`` maps bus id to net constant-power injection (generation
    minus load, per unit); by default the negated bus loads.
    """
    order = radial_order(net, strict=True)
    if not all(order.forward):
        bad = [order.pairs[k] for k, f in enumerate(order.forward) if not f]
        raise NonRadial(f"edges oriented towards the slack: {bad[:5]}")
    edges = net.edges
    ratios = normalize_ratios(net, ratios)
    inj = default_injections(net)
    if injections is not None:
        for b, s in injections.items():
            inj[b] = np.asarray(s, complex).reshape(-1)
    gains = {k: gain_matrix(edges[k].spec, r) for k, r in ratios.items()}

    pos = {}
    for k in order.edges:
        e = edges[k]
        m = net.buses[e.to_bus]
        if e.phases != m.phases:
            raise PhaseMismatch(f"edge {e.pair} phases {e.phases} do not feed all of bus {e.to_bus} ({m.phases})")
        pos[k] = net.buses[e.from_bus].phases.positions(e.phases)

    v = {net.slack_bus: net.slack_voltage.astype(complex)}
    for k in order.edges:
        e = edges[k]
        vn = v[e.from_bus][pos[k]]
        v[e.to_bus] = np.linalg.solve(gains[k], vn) if e.is_svr else vn.copy()

    children = {b: [] for b in net.buses}
    for k in order.edges:
        children[edges[k].from_bus].append(k)

    history = []
    cur, sec = {}, {}
    for it in range(1, max_iter + 1):
        # backward: aggregate currents towards the slack
        for k in reversed(order.edges):
            e = edges[k]
            m = e.to_bus
            vm = v[m]
            if np.any(np.abs(vm) < ZERO_VOLTAGE):
                raise ZeroVoltage(f"bus {m} voltage collapsed")
            bus = net.buses[m]
            i_into = -(np.conj(inj[m] / vm) - bus.shunt @ vm)
            for c in children[m]:
                i_into[pos[c]] += cur[c]
            if e.is_svr:
                sec[k] = i_into
                cur[k] = np.linalg.solve(gains[k].conj().T, i_into)
            else:
                cur[k] = i_into
        # forward: update voltages away from the slack
        change = 0.0
        for k in order.edges:
            e = edges[k]
            vn = v[e.from_bus][pos[k]]
            new = np.linalg.solve(gains[k], vn) if e.is_svr else vn - e.z @ cur[k]
            if damping:
                new = (1 - damping) * new + damping * v[e.to_bus]
            change = max(change, float(np.max(np.abs(new - v[e.to_bus]))))
            v[e.to_bus] = new
        history.append(change)
        if change < tol:
            break
    else:
        raise NonConvergence(f"sweep did not converge in {max_iter} iterations (last change {change:.3g})")

    # refresh currents so they are consistent with the final voltages
    for k in reversed(order.edges):
        e = edges[k]
        m = e.to_bus
        i_into = -(np.conj(inj[m] / v[m]) - net.buses[m].shunt @ v[m])
        for c in children[m]:
            i_into[pos[c]] += cur[c]
        if e.is_svr:
            sec[k] = i_into
            cur[k] = np.linalg.solve(gains[k].conj().T, i_into)
        else:
            cur[k] = i_into

    voltages = {b: v[b] for b in net.buses}
    return LoadFlowSolution(voltages, cur, sec, ratios, inj, it, history[-1] if history else 0.0, history)


def kcl_residual(net: Network, sol: LoadFlowSolution) -> float:
    """Max nodal current mismatch over non-slack buses."""
    edges = net.edges
    worst = 0.0
    for b, bus in net.buses.items():
        if b == net.slack_bus:
            continue
        vb = sol.voltages[b]
        mismatch = np.conj(sol.injections[b] / vb) - bus.shunt @ vb
        for k in net.edges_out(b):
            mismatch -= _embed(bus, edges[k].phases, sol.currents[k])
        for k in net.edges_in(b):
            i = sol.secondary_currents[k] if edges[k].is_svr else sol.currents[k]
            mismatch += _embed(bus, edges[k].phases, i)
        worst = max(worst, float(np.max(np.abs(mismatch))))
    return worst


def _embed(bus, phases, x):
    out = np.zeros(len(bus.phases), complex)
    out[bus.phases.positions(phases)] = x
    return out


def power_balance(net: Network, sol: LoadFlowSolution) -> dict:
    """Complex power bookkeeping: slack supply vs. loads, shunts and line losses."""
    edges = net.edges
    v0 = sol.voltages[net.slack_bus]
    s0 = net.buses[net.slack_bus]
    supplied = 0j
    for k in net.edges_out(net.slack_bus):
        p = s0.phases.positions(edges[k].phases)
        supplied += np.sum(v0[p] * np.conj(sol.currents[k]))
    consumed = 0j
    for b, bus in net.buses.items():
        if b == net.slack_bus:
            continue
        vb = sol.voltages[b]
        consumed += -np.sum(sol.injections[b]) + np.sum(vb * np.conj(bus.shunt @ vb))
    losses = 0j
    for k, e in enumerate(edges):
        if not e.is_svr:
            i = sol.currents[k]
            losses += np.sum((e.z @ i) * np.conj(i))
    svr_mismatch = 0.0
    for k, e in enumerate(edges):
        if e.is_svr:
            vn = sol.voltages[e.from_bus][net.buses[e.from_bus].phases.positions(e.phases)]
            vm = sol.voltages[e.to_bus]
            diff = np.sum(vn * np.conj(sol.currents[k])) - np.sum(vm * np.conj(sol.secondary_currents[k]))
            svr_mismatch = max(svr_mismatch, abs(diff))
    return {
        "supplied": supplied,
        "consumed": consumed,
        "losses": losses,
        "residual": abs(supplied - consumed - losses),
        "svr_mismatch": svr_mismatch,
    }


def _wrap_deg(x):
    return np.mod(x, 360.0)


def separation(net: Network, voltages: dict[int, np.ndarray], bus: int) -> float:
    """Largest deviation of adjacent phase-angle differences from 120 degrees."""
    phases = net.buses[bus].phases
    v = voltages[bus]
    worst = 0.0
    for p in phases:
        q = phases.right(p)
        if q not in phases:
            continue
        d = _wrap_deg(np.degrees(np.angle(v[phases.index(p)])) - np.degrees(np.angle(v[phases.index(q)])))
        worst = max(worst, abs(d - 120.0))
    return float(worst)


def metrics(net: Network, sol: LoadFlowSolution, relax_objective: float | None = None,
            deltas: dict[int, float] | None = None, dg_generation=None) -> Metrics:
    bal = power_balance(net, sol)
    c = float(np.real(bal["supplied"]))
    if dg_generation is not None:
        c += float(sum(np.real(np.sum(g)) for g in dg_generation.values()))
    mags = np.concatenate([np.abs(v) for v in sol.voltages.values()])
    v_avg = float(np.mean(mags))
    gap = None
    if relax_objective is not None:
        gap = 0.0 if relax_objective == 0 else 100.0 * (c - relax_objective) / relax_objective
    off = len(net.lines)
    seps, margins = {}, {}
    for j, e in enumerate(net.svrs):
        k = off + j
        seps[k] = separation(net, sol.voltages, e.to_bus)
        d = (deltas or {}).get(k, e.delta_deg)
        if d is not None:
            margins[k] = float(d) - seps[k]
    violation = max(0.0, net.v_min - float(mags.min()), float(mags.max()) - net.v_max)
    return Metrics(
        power_import=c,
        gap_percent=gap,
        v_min=float(mags.min()),
        v_max=float(mags.max()),
        unbalance=float(np.max(np.abs(1.0 - mags / v_avg))),
        phase_separation=max(seps.values(), default=0.0),
        svr_separation=seps,
        svr_margin=margins,
        voltage_violation=violation,
    )
