"""From a relaxation solution back to taps, voltages and a certified cost."""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import conic
from .builder import BuildOptions, RelaxationSolution, build_mbopf, extract, rbopf_residuals
from .errors import DegenerateV, NegativeR, NonRadial, ZeroTrace
from .loadflow import Metrics, metrics, normalize_ratios, sweep
from .netmodel import Network, radial_order
from .svrgain import gain_matrix, ratio_to_tap, tap_to_ratio

EIG_TOL = 1e-9
R_TOL = 1e-6


def rank1_vector(V: np.ndarray, ref_angle: float | None = 0.0, tol: float = EIG_TOL) -> np.ndarray:
    """Leading-eigenpair factor ``sqrt(lam1) u1`` of a Hermitian matrix.

    The global phase is fixed so the first entry has angle ``ref_angle``
    (radians); pass ``None`` to keep the eigensolver's phase.
    """
    V = np.asarray(V, complex)
    H = 0.5 * (V + V.conj().T)
    w, U = np.linalg.eigh(H)
    if w[-1] <= tol:
        raise DegenerateV(f"leading eigenvalue {w[-1]:.3g} is not positive")
    v = np.sqrt(w[-1]) * U[:, -1]
    if ref_angle is not None and abs(v[0]) > 0:
        v = v * np.exp(1j * (ref_angle - np.angle(v[0])))
    return v


def eig_ratio(V: np.ndarray) -> float:
    w = np.linalg.eigvalsh(0.5 * (V + V.conj().T))
    if w.size < 2 or w[-1] <= 0:
        return 0.0 if w.size < 2 else 1.0
    return float(max(w[-2], 0.0) / w[-1])


# ---------------------------------------------------------------- ratio recovery

def _open_delta_fit(spec, vn: np.ndarray, vm: np.ndarray, grid_deg: float = 1.0):
    """Least-squares fit of ``vn = A(r) vm e^{j theta}`` over (r_a, r_c, theta)."""
    D, F = spec.constant_matrices()
    lo, hi = spec.r_min, spec.r_max
    free = [p for p in range(3) if hi[p] > lo[p]]

    def best_r(theta):
        u = vm * np.exp(1j * theta)
        y, f = D @ u, F @ u
        r = np.array(lo, float)
        for p in free:
            den = abs(y[p]) ** 2
            r[p] = np.real(np.conj(y[p]) * (vn[p] - f[p])) / den if den > 0 else 1.0
        return r

    def resid(r, theta):
        A = np.diag(r) @ D + F
        return float(np.linalg.norm(vn - A @ vm * np.exp(1j * theta)))

    thetas = np.radians(np.arange(0.0, 360.0, grid_deg))
    scores = [resid(best_r(t), t) for t in thetas]
    t0 = thetas[int(np.argmin(scores))]
    r0 = best_r(t0)

    def obj(z):
        r = np.array(lo, float)
        r[free] = z[:-1]
        return resid(r, z[-1]) ** 2

    z0 = np.r_[r0[free], t0]
    res = minimize(obj, z0, method="BFGS", options={"gtol": 1e-14, "maxiter": 500})
    z = res.x if res.fun <= obj(z0) else z0
    r = np.array(lo, float)
    r[free] = z[:-1]
    return r, float(np.degrees(z[-1]) % 360.0), float(np.sqrt(max(obj(z), 0.0)))


def recover_ratios(net: Network, sol: RelaxationSolution, mode: str = "mbopf") -> dict[int, np.ndarray]:
    """Effective ratios implied by a relaxation solution, clamped to bounds."""
    edges = net.edges
    out = {}
    for j, e in enumerate(net.svrs):
        k = len(net.lines) + j
        spec = e.spec
        pn = net.buses[e.from_bus].phases.positions(e.phases)
        pm = net.buses[e.to_bus].phases.positions(e.phases)
        Vn = sol.V[e.from_bus][np.ix_(pn, pn)]
        Vm = sol.V[e.to_bus][np.ix_(pm, pm)]
        if mode != "mbopf":
            dn, dm = np.real(np.diag(Vn)), np.real(np.diag(Vm))
            if np.any(dm <= EIG_TOL):
                raise DegenerateV(f"regulator {e.pair}: secondary voltage vanishes")
            r = np.sqrt(np.maximum(dn, 0.0) / dm)
            if mode == "cgopf_style" or spec.gang:
                r = np.full_like(r, r.mean())
        elif spec.svr_type == "open_delta":
            vn = rank1_vector(Vn)
            vm = rank1_vector(Vm)
            r, _, _ = _open_delta_fit(spec, vn, vm)
        else:
            d = np.diag(sol.R[k]).astype(float)
            if np.any(d < -R_TOL):
                raise NegativeR(f"regulator {e.pair}: negative R diagonal {d}")
            r = np.sqrt(np.maximum(d, 0.0))
        out[k] = np.clip(r, spec.r_min, spec.r_max)
    return out


def ratios_to_taps(net: Network, ratios: dict[int, np.ndarray]) -> dict[int, list[int]]:
    return {k: [ratio_to_tap(x, net.edges[k].spec.variant) for x in r] for k, r in ratios.items()}


def quantize(net: Network, ratios: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    """Round ratios to the nearest tap position and back, within bounds."""
    out = {}
    for k, r in ratios.items():
        spec = net.edges[k].spec
        q = np.array([tap_to_ratio(ratio_to_tap(x, spec.variant), spec.variant) for x in r])
        out[k] = np.clip(q, spec.r_min, spec.r_max)
    return out


# ---------------------------------------------------------------- branch-variable retrieval

def retrieve_branch_variables(net: Network, V, I, S, Sp, ratios):
    """Walk the radial order recovering (v, i, i') from lifted matrices.

    ``i = S^H v_n / tr(V_n)``; across regulators ``v_m = A^{-1} v_n`` and
    ``i' = conj(S'_diag / v_m)``; across lines ``v_m = v_n - Z i``.
    """
    order = radial_order(net)
    if not order.radial:
        raise NonRadial("branch-variable retrieval needs a radial network")
    if not all(order.forward):
        raise NonRadial("edges must be oriented away from the slack")
    edges = net.edges
    ratios = normalize_ratios(net, ratios)
    v = {net.slack_bus: net.slack_voltage.astype(complex)}
    cur, sec = {}, {}
    for k in order.edges:
        e = edges[k]
        n, m = e.from_bus, e.to_bus
        pn = net.buses[n].phases.positions(e.phases)
        vn = v[n][pn]
        tr = float(np.real(np.trace(V[n][np.ix_(pn, pn)])))
        if abs(tr) <= EIG_TOL:
            raise ZeroTrace(f"bus {n}: trace of lifted voltage vanishes")
        cur[k] = S[k].conj().T @ vn / tr
        if e.is_svr:
            A = gain_matrix(e.spec, ratios[k], check=False)
            vm = np.linalg.solve(A, vn)
            sec[k] = np.conj(Sp[k] / vm)
        else:
            vm = vn - e.z @ cur[k]
        vfull = v.get(m)
        if vfull is None:
            vfull = np.zeros(len(net.buses[m].phases), complex)
        vfull = vfull.copy()
        vfull[net.buses[m].phases.positions(e.phases)] = vm
        v[m] = vfull
    return v, cur, sec


def bopf_residuals(net: Network, v, i, ip, ratios, injections=None) -> dict:
    """Violations of the original (unlifted) branch-flow equations."""
    edges = net.edges
    ratios = normalize_ratios(net, ratios)
    out = {"ohm": 0.0, "voltage_gain": 0.0, "current_gain": 0.0, "balance": 0.0, "slack": 0.0}
    out["slack"] = float(np.max(np.abs(v[net.slack_bus] - net.slack_voltage)))
    for k, e in enumerate(edges):
        pn = net.buses[e.from_bus].phases.positions(e.phases)
        pm = net.buses[e.to_bus].phases.positions(e.phases)
        vn, vm = v[e.from_bus][pn], v[e.to_bus][pm]
        if e.is_svr:
            A = gain_matrix(e.spec, ratios[k], check=False)
            out["voltage_gain"] = max(out["voltage_gain"], float(np.max(np.abs(vn - A @ vm))))
            out["current_gain"] = max(out["current_gain"],
                                      float(np.max(np.abs(i[k] - np.linalg.solve(A.conj().T, ip[k])))))
        else:
            out["ohm"] = max(out["ohm"], float(np.max(np.abs(vm - (vn - e.z @ i[k])))))
    for m, bus in net.buses.items():
        if m == net.slack_bus:
            continue
        frak = -bus.load if injections is None else np.asarray(injections[m], complex)
        vb = v[m]
        s = frak - vb * np.conj(bus.shunt @ vb)
        flow = np.zeros(len(bus.phases), complex)
        for k in net.edges_out(m):
            pos = bus.phases.positions(edges[k].phases)
            flow[pos] += vb[pos] * np.conj(i[k])
        for k in net.edges_in(m):
            pos = bus.phases.positions(edges[k].phases)
            flow[pos] -= vb[pos] * np.conj(ip[k] if edges[k].is_svr else i[k])
        out["balance"] = max(out["balance"], float(np.max(np.abs(s - flow))))
    out["max"] = max(out.values())
    return out


# ---------------------------------------------------------------- certification

@dataclass
class RecoveredOperatingPoint:
    ratios: dict[int, np.ndarray]
    taps: dict[int, list[int]]
    voltages: dict[int, np.ndarray]
    objective_feasible: float
    gap_percent: float
    metrics: Metrics
    feasible: bool
    relax_objective: float | None = None
    eig_ratio_avg: float | None = None
    runtime_s: float | None = None
    status: str = "optimal"
    extra: dict = field(default_factory=dict)

    def report(self) -> dict:
        m = self.metrics
        return {
            "ratios": {str(k): [float(x) for x in r] for k, r in self.ratios.items()},
            "taps": {str(k): [int(t) for t in ts] for k, ts in self.taps.items()},
            "objective_relax": self.relax_objective,
            "objective_feasible": self.objective_feasible,
            "gap_pct": self.gap_percent,
            "vmin": m.v_min,
            "vmax": m.v_max,
            "unbalance": m.unbalance,
            "delta_sep": m.phase_separation,
            "eig_ratio_avg": self.eig_ratio_avg,
            "runtime_s": self.runtime_s,
            "feasible": self.feasible,
            "voltage_violation": m.voltage_violation,
            "status": self.status,
            **self.extra,
        }


def evaluate(net: Network, ratios, injections=None, relax_objective: float | None = None,
             deltas=None, dg_generation=None, v_tol: float = 1e-6) -> RecoveredOperatingPoint:
    """Load flow at fixed ratios, metrics, gap and voltage-limit check."""
    ratios = normalize_ratios(net, ratios)
    sol = sweep(net, ratios, injections)
    met = metrics(net, sol, relax_objective, deltas, dg_generation)
    gap = met.gap_percent
    if relax_objective is not None and relax_objective == 0:
        warnings.warn("relaxation objective is zero; gap reported as 0", RuntimeWarning, stacklevel=2)
    return RecoveredOperatingPoint(
        ratios=ratios,
        taps=ratios_to_taps(net, ratios),
        voltages=sol.voltages,
        objective_feasible=met.power_import,
        gap_percent=0.0 if gap is None else gap,
        metrics=met,
        feasible=met.voltage_violation <= v_tol,
        relax_objective=relax_objective,
    )


@dataclass
class PipelineResult:
    relaxation: RelaxationSolution
    point: RecoveredOperatingPoint
    quantized: RecoveredOperatingPoint | None
    residuals: dict
    build_time: float
    solve_time: float

    def report(self) -> dict:
        rep = self.point.report()
        if self.quantized is not None:
            q = self.quantized
            rep["quantized"] = {
                "taps": {str(k): [int(t) for t in ts] for k, ts in q.taps.items()},
                "objective_feasible": q.objective_feasible,
                "gap_pct": q.gap_percent,
                "vmin": q.metrics.v_min,
                "vmax": q.metrics.v_max,
                "feasible": q.feasible,
            }
        return rep


def optimize(net: Network, opts: BuildOptions | None = None, backend: str | None = None,
             tol: float = conic.DEFAULT_TOL, quantized: bool = True) -> PipelineResult:
    """Build, solve, recover ratios and certify with a load flow.

    The certified point uses the continuous recovered ratios; with
    ``quantized`` a second load flow at the nearest tap positions is also
    reported.
    """
    opts = opts or BuildOptions()
    t0 = time.perf_counter()
    prob, vm = build_mbopf(net, opts)
    t1 = time.perf_counter()
    csol = conic.solve(prob, tol=tol, backend=backend)
    rsol = extract(vm, csol)
    ratios = recover_ratios(net, rsol, opts.svr_mode)
    deltas = {k: sv.delta for k, sv in vm.svr.items() if sv.delta is not None}
    dg = {m: g for m, g in rsol.sg.items()} or None
    injections = None
    if dg:
        injections = {m: -b.load.astype(complex) for m, b in net.buses.items()}
        for m, g in rsol.sg.items():
            injections[m] = g - net.buses[m].load
    point = evaluate(net, ratios, injections, rsol.objective, deltas,
                     dg if opts.objective == "import_plus_dg" else None)
    res = rbopf_residuals(net, rsol)
    point.eig_ratio_avg = res["eig_ratio_avg"]
    point.runtime_s = csol.solve_time
    point.status = csol.status
    point.extra = {"mode": opts.svr_mode, "backend": csol.backend, "solver_status": csol.raw_status}
    qpoint = None
    if quantized:
        qpoint = evaluate(net, quantize(net, ratios), injections, rsol.objective, deltas,
                          dg if opts.objective == "import_plus_dg" else None)
    return PipelineResult(rsol, point, qpoint, res, t1 - t0, csol.solve_time)


# ---------------------------------------------------------------- exhaustive oracle

@dataclass
class OracleResult:
    best_cost: float | None
    best_taps: dict[int, list[int]] | None
    evaluated: int
    feasible: int
    failures: int


def _tap_values(step: int) -> list[int]:
    vals = list(range(-16, 17, max(1, int(step))))
    if 16 not in vals:
        vals.append(16)
    return vals


def tap_grid_search(net: Network, tap_step: int = 1, gang: bool = True, v_tol: float = 1e-6,
                    workers: int | None = None) -> OracleResult:
    """Enumerate tap settings, run a load flow for each, keep the cheapest feasible one.

    With ``gang`` every regulator uses one tap for all of its adjustable
    phases; otherwise phases are enumerated independently (only sensible for
    a single regulator).
    """
    import itertools
    from concurrent.futures import ThreadPoolExecutor

    from .errors import NonConvergence, ZeroVoltage

    vals = _tap_values(tap_step)
    per_svr = []
    for e in net.svrs:
        free = e.spec.free_phases
        if gang:
            per_svr.append([tuple(t if p in free else 0 for p in range(e.spec.size)) for t in vals])
        else:
            grids = [vals if p in free else [0] for p in range(e.spec.size)]
            per_svr.append(list(itertools.product(*grids)))

    def run(combo):
        ratios = []
        for e, taps in zip(net.svrs, combo):
            r = np.array([tap_to_ratio(t, e.spec.variant) for t in taps])
            if np.any(r < e.spec.r_min - 1e-12) or np.any(r > e.spec.r_max + 1e-12):
                return None
            ratios.append(r)
        try:
            sol = sweep(net, ratios)
        except (NonConvergence, ZeroVoltage):
            return "fail"
        met = metrics(net, sol)
        if met.voltage_violation > v_tol:
            return False
        return met.power_import

    combos = list(itertools.product(*per_svr))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, combos))
    best, best_combo, nfeas, nfail = None, None, 0, 0
    for combo, c in zip(combos, results):
        if c == "fail":
            nfail += 1
        elif c is not None and c is not False:
            nfeas += 1
            if best is None or c < best:
                best, best_combo = c, combo
    taps = None
    if best_combo is not None:
        off = len(net.lines)
        taps = {off + j: list(t) for j, t in enumerate(best_combo)}
    return OracleResult(best, taps, len(combos), nfeas, nfail)
