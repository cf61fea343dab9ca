"""Acceptance suite: one test, and one PASS/FAIL line, per criterion."""
import time
import warnings

import numpy as np

from svropf.bounds import sample_separated_voltages, transformed_box, voltage_box
from svropf.builder import BuildOptions, lift, minor_residuals
from svropf.envelope import mccormick_rows
from svropf.loadflow import power_balance, sweep
from svropf.netmodel import load_feeder, parse_feeder
from svropf.recovery import bopf_residuals, optimize, retrieve_branch_variables, tap_grid_search
from svropf.svrgain import MAX_TAP, SvrSpec, constant_matrices, gain_matrix, ratio_to_tap, tap_to_ratio

from conftest import FEEDERS, pvec, pmat, svr_doc

TYPES = ("wye", "closed_delta", "open_delta")
TINY = {"wye": "tiny4_wye", "closed_delta": "tiny4_cdelta", "open_delta": "tiny4_odelta"}
SHIPPED = ("tiny4_wye", "tiny4_cdelta", "tiny4_odelta", "ieee13", "ieee37")


def table_entries(kind, r):
    """Gain matrix written out entry by entry."""
    ra, rb, rc = r
    if kind == "wye":
        return np.array([[ra, 0, 0], [0, rb, 0], [0, 0, rc]])
    if kind == "closed_delta":
        return np.array([[ra, 1 - ra, 0], [0, rb, 1 - rb], [1 - rc, 0, rc]])
    return np.array([[ra, 1 - ra, 0], [0, 1, 0], [0, 1 - rc, rc]])


def test_ac01_gain_algebra(verdict, rng):
    t0 = time.perf_counter()
    worst = 0.0
    for kind in TYPES:
        spec = SvrSpec(kind)
        for _ in range(100):
            r = rng.uniform(spec.r_min, spec.r_max)
            worst = max(worst, np.max(np.abs(gain_matrix(spec, r) - table_entries(kind, r))))
    ident = np.array_equal(gain_matrix(SvrSpec("wye"), np.ones(3)), np.eye(3))
    dt = time.perf_counter() - t0
    verdict(1, worst <= 1e-14 and ident and dt < 1.0,
            f"gain matrices: max entry error {worst:.1e} (tol 1e-14), wye r=1 identity {ident}, {dt:.3f}s (< 1s)")


def test_ac02_tap_mapping(verdict):
    bad = [(t, v) for v in ("A", "B") for t in range(-MAX_TAP, MAX_TAP + 1)
           if ratio_to_tap(tap_to_ratio(t, v), v) != t]
    plus16 = ratio_to_tap(1.1, "B")
    verdict(2, not bad and plus16 == 16,
            f"tap round trip over 33 taps x 2 variants: {len(bad)} mismatches; r=1.1 type B -> {plus16:+d}")


def test_ac03_bound_soundness(verdict, rng):
    t0 = time.perf_counter()
    violations = 0
    n = 10_000
    for kind in TYPES:
        D, F = constant_matrices(kind)
        for delta in (3.0, 5.0, 10.0, 15.0):
            b = voltage_box(0.9, 1.1, delta)
            t = transformed_box(D, F, b)
            v = sample_separated_voltages(rng, n, 0.9, 1.1, delta)
            V = v[:, :, None] * v.conj()[:, None, :]
            U, W = V.real, V.imag
            for X, box in [(U, b.U), (W, b.W), (D @ U @ D.T, t.tilde_U), (D @ W @ D.T, t.tilde_W),
                           (D @ U @ F.T, t.hat_U), (D @ W @ F.T, t.hat_W)]:
                violations += int(np.sum((X < box.lo - 1e-12) | (X > box.hi + 1e-12)))
    dt = time.perf_counter() - t0
    verdict(3, violations == 0 and dt < 10.0,
            f"{n} samples x 3 types x 4 deltas: {violations} box violations over six matrices, {dt:.2f}s (< 10s)")


def test_ac04_mccormick(verdict, rng):
    tol, n = 1e-9, 10_000
    contain = corner = 0
    for _ in range(50):
        a, b = np.sort(rng.uniform(-3, 3, 2))
        c, d = np.sort(rng.uniform(-3, 3, 2))
        env = mccormick_rows(a, b, c, d)
        u, w = rng.uniform(a, b, n), rng.uniform(c, d, n)
        vals = env.rows @ np.vstack([u, w, u * w, np.ones(n)])
        contain += int(np.sum(vals > tol))
        for cu in (a, b):
            for cw in (c, d):
                lo, hi = env.x_interval(cu, cw)
                corner += int(abs(lo - cu * cw) > tol or abs(hi - cu * cw) > tol)
    verdict(4, contain == 0 and corner == 0,
            f"50 boxes x {n} samples: {contain} containment and {corner} corner violations (tol {tol:g})")


def test_ac05_rank_one_minors(verdict, rng):
    worst = 0.0
    for _ in range(1000):
        v = rng.normal(size=3) + 1j * rng.normal(size=3)
        res = minor_residuals(np.outer(v, v.conj()))
        worst = max(worst, max(abs(x) for vals in res.values() for x in vals))
    x, y = (rng.normal(size=3) + 1j * rng.normal(size=3) for _ in range(2))
    res = minor_residuals(np.outer(x, x.conj()) + np.outer(y, y.conj()))
    rank2 = max(abs(x) for vals in res.values() for x in vals)
    verdict(5, worst <= 1e-10 and rank2 > 1e-3,
            f"rank-1 minors max {worst:.1e} (tol 1e-10); rank-2 max {rank2:.3g} (> 1e-3)")


def test_ac06_retrieval(verdict, rng):
    worst = gain = 0.0
    for kind in TYPES:
        net = load_feeder(FEEDERS / f"{TINY[kind]}.json")
        for _ in range(3):
            spec = net.svrs[0].spec
            r = rng.uniform(spec.r_min, spec.r_max)
            sol = sweep(net, [r], tol=1e-13)
            p = lift(net, sol.voltages, sol.currents, sol.secondary_currents, sol.ratios)
            v, i, ip = retrieve_branch_variables(net, p.V, p.I, p.S, p.Sp, sol.ratios)
            for m in v:
                worst = max(worst, np.max(np.abs(v[m] - sol.voltages[m])))
            for k in i:
                worst = max(worst, np.max(np.abs(i[k] - sol.currents[k])))
            for k in ip:
                worst = max(worst, np.max(np.abs(ip[k] - sol.secondary_currents[k])))
            gain = max(gain, bopf_residuals(net, v, i, ip, sol.ratios)["current_gain"])
    pointwise = 0.0
    for _ in range(1000):
        u = rng.normal(size=3) + 1j * rng.normal(size=3)
        w = rng.normal(size=3) + 1j * rng.normal(size=3)
        pointwise = max(pointwise, np.max(np.abs(np.diag(u) @ w.conj() - u * w.conj())))
    verdict(6, worst < 1e-8 and pointwise <= 1e-12 and gain < 1e-8,
            f"retrieval discrepancy {worst:.1e} (< 1e-8) on three 4-bus feeders; pointwise identity "
            f"{pointwise:.1e} (<= 1e-12); current gain residual {gain:.1e} (< 1e-8)")


def test_ac07_lower_bound(verdict):
    t0 = time.perf_counter()
    ok, parts = True, []
    for kind in TYPES:
        net = load_feeder(FEEDERS / f"{TINY[kind]}.json")
        res = optimize(net, quantized=False)
        c, cb = res.relaxation.objective, res.point.objective_feasible
        best = tap_grid_search(net, tap_step=1, gang=True).best_cost
        ok &= best is not None and c <= best + 1e-6 and c <= cb + 1e-6
        parts.append(f"{kind}: oracle-c {best - c:.2e}, c_breve-c {cb - c:.2e}")
    dt = time.perf_counter() - t0
    verdict(7, ok and dt < 120.0, "; ".join(parts) + f"; {dt:.1f}s (< 120s)")


def test_ac08_small_feeder_gap(verdict):
    net = load_feeder(FEEDERS / "tiny4_wye.json")
    gap = optimize(net).point.gap_percent
    if 1.0 < gap <= 2.0:
        warnings.warn(f"4-bus wye gap {gap:.3f}% above the 1% target", stacklevel=1)
    verdict(8, gap <= 2.0, f"4-bus wye gap {gap:.2e}% (target <= 1%, hard limit 2%)")


def test_ac09_ieee_reproduction(verdict, ieee13, ieee37):
    r13 = optimize(ieee13)
    c = r13.relaxation.objective
    gap13 = r13.point.gap_percent
    vmin = r13.point.metrics.v_min
    r37 = optimize(ieee37)
    taps37 = r37.point.taps[len(ieee37.lines)]
    gap37 = r37.point.gap_percent
    ok = (abs(c - 0.7135) <= 0.01 * 0.7135 and gap13 <= 0.5 and abs(vmin - 0.9960) <= 0.005
          and taps37 == [16, 16, 16] and gap37 <= 0.5)
    verdict(9, ok, f"13-bus c={c:.4f} (0.7135 +-1%), gap {gap13:.4f}% (<= 0.5), min v {vmin:.4f} "
                   f"(0.9960 +-0.005); 37-bus taps {taps37}, gap {gap37:.4f}% (<= 0.5)")


def test_ac10_baseline_modes(verdict, ieee13):
    gaps = {}
    for mode in ("mbopf", "cgopf_style", "ciopf_style"):
        res = optimize(ieee13, BuildOptions(svr_mode=mode), quantized=False)
        assert res.relaxation.status == "optimal"
        gaps[mode] = res.point.gap_percent
    ok = all(gaps[m] >= gaps["mbopf"] - 0.1 for m in ("cgopf_style", "ciopf_style"))
    verdict(10, ok, "13-bus gaps: " + ", ".join(f"{m} {g:.4f}%" for m, g in gaps.items())
                    + " (baselines >= mbopf - 0.1)")


def test_ac11_load_flow(verdict):
    z, s = 0.02 + 0.06j, 0.8 + 0.3j
    doc = {
        "slack": {"bus": 0, "voltage_phasors": pvec([1.0])},
        "buses": [{"id": 0, "phases": "a"}, {"id": 1, "phases": "a", "load_s": pvec([s])}],
        "lines": [{"from": 0, "to": 1, "z_matrix": pmat([[z]])}],
    }
    v = sweep(parse_feeder(doc), tol=1e-14).voltages[1][0]
    cc = np.conj(z) * s
    b = 2 * cc.real - 1
    m = (-b + np.sqrt(b * b - 4 * abs(cc) ** 2)) / 2
    closed = abs(v - (cc + m))
    nets = [load_feeder(FEEDERS / f"{n}.json") for n in SHIPPED]
    nets += [parse_feeder(svr_doc(kind)) for kind in TYPES]
    cons = max(power_balance(n, sweep(n))["residual"] for n in nets)
    verdict(11, closed <= 1e-10 and cons < 1e-8,
            f"two-bus closed form error {closed:.1e} (<= 1e-10); conservation residual {cons:.1e} "
            f"(< 1e-8) on {len(nets)} feeders")
