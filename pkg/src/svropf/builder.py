"""Assemble the branch-flow conic relaxation with regulator tap variables.

Per bus the lifted voltage ``V_m`` (Hermitian), per edge the current and
power matrices ``I``, ``S`` with the PSD coupling block, per regulator the
ratio vector ``r``, its outer-product surrogate ``R`` and the linearized
voltage-gain machinery. Trilinear products are relaxed with McCormick
envelopes whose boxes come from :mod:`svropf.bounds`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bounds import TransformedBox, VoltageBox, transformed_box, voltage_box
from .conic import ConicProblem
from .envelope import mccormick_rows
from .errors import EmptyBox, InfeasibleBox, MissingDg, NotSvrSecondary, UnsupportedMode
from .linexpr import CLin, Lin, cbmat, vstack
from .netmodel import Network, PhaseMask
from .svrgain import gain_matrix

SVR_MODES = ("mbopf", "ciopf_style", "cgopf_style")
OBJECTIVES = ("import", "import_plus_dg")
DEFAULT_DELTA = {"wye": 5.0, "closed_delta": 5.0, "open_delta": 10.0}
FIXED_WIDTH = 1e-12


@dataclass
class BuildOptions:
    svr_mode: str = "mbopf"
    rank_reinforcement: bool = True
    psd_on_R: bool = True
    objective: str = "import"
    deltas: dict[int, float] = field(default_factory=dict)
    gang: dict[int, bool] = field(default_factory=dict)

    def __post_init__(self):
        if self.svr_mode not in SVR_MODES:
            raise UnsupportedMode(f"unknown SVR mode {self.svr_mode!r}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")


@dataclass
class SvrVars:
    """Symbols attached to one regulator edge."""

    edge: int
    delta: float | None
    r: Lin | None = None
    R: Lin | None = None
    Sp: CLin | None = None
    U: Lin | None = None
    W: Lin | None = None
    Ut: Lin | None = None
    Wt: Lin | None = None
    Uh: Lin | None = None
    Wh: Lin | None = None
    Ugt: Lin | None = None
    Pst: Lin | None = None
    Ugh: Lin | None = None
    Psh: Lin | None = None
    vbox: VoltageBox | None = None
    tbox: TransformedBox | None = None


@dataclass
class VarMap:
    """Symbol table of the lifted problem; values are affine expressions."""

    V: dict[int, CLin] = field(default_factory=dict)
    s: dict[int, CLin] = field(default_factory=dict)
    frak_s: dict[int, CLin] = field(default_factory=dict)
    sg: dict[int, CLin] = field(default_factory=dict)
    I: dict[int, CLin] = field(default_factory=dict)
    S: dict[int, CLin] = field(default_factory=dict)
    svr: dict[int, SvrVars] = field(default_factory=dict)
    X: dict[int, dict[tuple[int, int], Lin]] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    mode: str = "mbopf"

    def bump(self, key, k=1):
        self.counts[key] = self.counts.get(key, 0) + k


@dataclass
class RelaxationSolution:
    status: str
    objective: float
    V: dict[int, np.ndarray]
    I: dict[int, np.ndarray]
    S: dict[int, np.ndarray]
    Sp: dict[int, np.ndarray]
    s: dict[int, np.ndarray]
    sg: dict[int, np.ndarray]
    r: dict[int, np.ndarray]
    R: dict[int, np.ndarray]
    aux: dict[str, dict] = field(default_factory=dict)
    solve_time: float = 0.0
    x: np.ndarray | None = None


def extract(varmap: VarMap, sol) -> RelaxationSolution:
    """Evaluate every symbol at a :class:`~svropf.conic.ConicSolution`."""
    x = sol.x
    ev = lambda d: {k: v.value(x) for k, v in d.items()}
    aux = {}
    for key in ("Ut", "Wt", "Uh", "Wh", "Ugt", "Pst", "Ugh", "Psh"):
        aux[key] = {k: getattr(sv, key).value(x) for k, sv in varmap.svr.items() if getattr(sv, key) is not None}
    aux["X"] = {m: {k: float(v.value(x)[0]) for k, v in d.items()} for m, d in varmap.X.items()}
    return RelaxationSolution(
        status=sol.status,
        objective=float(sol.objective),
        V=ev(varmap.V), I=ev(varmap.I), S=ev(varmap.S),
        Sp={k: sv.Sp.value(x) for k, sv in varmap.svr.items()},
        s=ev(varmap.s), sg=ev(varmap.sg),
        r={k: sv.r.value(x) for k, sv in varmap.svr.items() if sv.r is not None},
        R={k: sv.R.value(x) for k, sv in varmap.svr.items() if sv.R is not None},
        aux=aux, solve_time=sol.solve_time, x=x,
    )


# ---------------------------------------------------------------- helpers

def _embed(k_bus: int, pos) -> np.ndarray:
    P = np.zeros((k_bus, len(pos)))
    P[pos, np.arange(len(pos))] = 1.0
    return P


def add_mccormick(prob: ConicProblem, u: Lin, w: Lin, x: Lin, u_box, w_box, tag: str) -> int:
    """Relax x = u*w over the box; degenerate boxes become exact linear rows."""
    try:
        env = mccormick_rows(u_box[0], u_box[1], w_box[0], w_box[1])
    except EmptyBox as exc:
        raise InfeasibleBox(f"{tag}: {exc}") from None
    start = prob.count()
    if env.u_fixed:
        u0 = 0.5 * (env.u_min + env.u_max)
        prob.eq(u - u0, tag)
        prob.eq(x - w * u0, tag)
        prob.le(w - env.w_max, tag)
        prob.le(env.w_min - w, tag)
    elif env.w_fixed:
        w0 = 0.5 * (env.w_min + env.w_max)
        prob.eq(w - w0, tag)
        prob.eq(x - u * w0, tag)
        prob.le(u - env.u_max, tag)
        prob.le(env.u_min - u, tag)
    else:
        for cu, cw, cx, c0 in env.rows:
            prob.le(u * cu + w * cw + x * cx + c0, tag)
    return prob.count() - start


def _entry(M: Lin, i: int, j: int) -> Lin:
    return M[i, j].reshape(1)


def svr_delta(net: Network, k: int, opts: BuildOptions) -> float:
    e = net.edges[k]
    if k in opts.deltas:
        return float(opts.deltas[k])
    if e.delta_deg is not None:
        return float(e.delta_deg)
    return DEFAULT_DELTA[e.spec.svr_type]


def _gang(net: Network, k: int, opts: BuildOptions) -> bool:
    return bool(opts.gang.get(k, net.edges[k].spec.gang))


# ---------------------------------------------------------------- main build

def build_mbopf(net: Network, opts: BuildOptions | None = None) -> tuple[ConicProblem, VarMap]:
    opts = opts or BuildOptions()
    if opts.svr_mode != "mbopf":
        bad = [e.pair for e in net.svrs if e.spec.svr_type != "wye"]
        if bad:
            raise UnsupportedMode(f"{opts.svr_mode} handles wye regulators only; delta units at {bad}")
    if opts.objective == "import_plus_dg" and not any(b.dg for b in net.buses.values()):
        raise MissingDg("objective import_plus_dg needs at least one DG unit")

    prob = ConicProblem(net.name or "feeder")
    vm = VarMap(mode=opts.svr_mode)
    edges = net.edges

    # buses: lifted voltages, magnitude box, injections
    for m, bus in net.buses.items():
        k = len(bus.phases)
        V = prob.hermitian_var(f"V[{m}]", k)
        vm.V[m] = V
        if m == net.slack_bus:
            v0 = net.slack_voltage
            prob.eq(V - np.outer(v0, v0.conj()), "slack")
            vm.s[m] = prob.complex_var(f"s[{m}]", k)
            continue
        d = V.re.diag()
        prob.le(d - net.v_max**2, "vbox")
        prob.le(net.v_min**2 - d, "vbox")
        s = prob.complex_var(f"s[{m}]", k)
        vm.s[m] = s
        if bus.dg is not None:
            g = prob.complex_var(f"sg[{m}]", k)
            vm.sg[m] = g
            frak = g - bus.load
            _dg_rows(prob, g, bus.dg, f"dg[{m}]")
        else:
            frak = CLin.constant(-bus.load, prob.nvars)
        vm.frak_s[m] = frak
        prob.eq(s - (frak - (V @ bus.shunt.conj().T).diag()), "inj")

    # edges: PSD coupling, Ohm's law, regulator powers
    for k, e in enumerate(edges):
        n, m = e.from_bus, e.to_bus
        pn = net.buses[n].phases.positions(e.phases)
        pm = net.buses[m].phases.positions(e.phases)
        ke = len(e.phases)
        I = prob.hermitian_var(f"I[{k}]", ke)
        S = prob.complex_var(f"S[{k}]", (ke, ke))
        vm.I[k], vm.S[k] = I, S
        Vn = vm.V[n][np.ix_(pn, pn)]
        Vm = vm.V[m][np.ix_(pm, pm)]
        prob.hermitian_psd(cbmat([[Vn, S], [S.H, I]]), f"psd[{k}]")
        if not e.is_svr:
            Z = e.z
            ohm = Vn + Z @ I @ Z.conj().T - (S @ Z.conj().T + Z @ S.H)
            prob.eq(Vm - ohm, f"ohm[{k}]")
            continue
        sv = SvrVars(edge=k, delta=svr_delta(net, k, opts) if opts.svr_mode == "mbopf" else None)
        vm.svr[k] = sv
        sv.Sp = prob.complex_var(f"Sp[{k}]", ke)
        if e.spec.svr_type == "wye":
            prob.eq(S.diag() - sv.Sp, f"svrpow[{k}]")
        else:
            prob.eq(S.trace() - sv.Sp.sum(), f"svrpow[{k}]")
        if opts.svr_mode == "mbopf":
            _gain_mbopf(prob, vm, net, k, Vn, Vm, opts)
        elif opts.svr_mode == "ciopf_style":
            _gain_ciopf(prob, vm, net, k, Vn, Vm, opts)
        else:
            _gain_cgopf(prob, vm, net, k, Vn, Vm)

    # power balance at every bus
    for m, bus in net.buses.items():
        kb = len(bus.phases)
        flow = CLin.constant(np.zeros(kb), prob.nvars)
        for k in net.edges_out(m):
            P = _embed(kb, bus.phases.positions(edges[k].phases))
            flow = flow + P @ vm.S[k].diag()
        for k in net.edges_in(m):
            e = edges[k]
            P = _embed(kb, bus.phases.positions(e.phases))
            if e.is_svr:
                flow = flow - P @ vm.svr[k].Sp
            else:
                flow = flow - P @ (vm.S[k] - e.z @ vm.I[k]).diag()
        prob.eq(vm.s[m] - flow, "balance")

    if opts.rank_reinforcement and opts.svr_mode == "mbopf":
        for k, sv in vm.svr.items():
            add_rank_reinforcement(prob, vm, net, edges[k].to_bus, sv.delta)
    objective(prob, vm, net, opts.objective)
    return prob, vm


def _dg_rows(prob: ConicProblem, g: CLin, dg, tag: str):
    t = np.tan(np.arccos(dg.pf))
    prob.ge(g.re, tag)
    prob.le(g.im - g.re * t, tag)
    prob.le(-g.im - g.re * t, tag)
    for p in range(g.shape[0]):
        prob.soc(Lin.constant([dg.smax], prob.nvars), vstack([g.re[p].reshape(1), g.im[p].reshape(1)]).flatten(), tag)


def _ratio_vars(prob, vm, net, k, opts, with_R: bool):
    e = net.edges[k]
    spec = e.spec
    sv = vm.svr[k]
    ke = spec.size
    r = prob.var(f"r[{k}]", ke)
    sv.r = r
    for p in range(ke):
        if spec.r_max[p] - spec.r_min[p] <= FIXED_WIDTH:
            prob.eq(r[p].reshape(1) - spec.r_min[p], f"rbox[{k}]")
        else:
            prob.le(r[p].reshape(1) - spec.r_max[p], f"rbox[{k}]")
            prob.le(spec.r_min[p] - r[p].reshape(1), f"rbox[{k}]")
    free = spec.free_phases
    if _gang(net, k, opts):
        for p in free[1:]:
            prob.eq(r[p].reshape(1) - r[free[0]].reshape(1), f"gang[{k}]")
    if not with_R:
        return r
    R = prob.symmetric_var(f"R[{k}]", ke)
    sv.R = R
    for i in range(ke):
        for j in range(ke):
            add_mccormick(prob, r[i].reshape(1), r[j].reshape(1), _entry(R, i, j),
                          (spec.r_min[i], spec.r_max[i]), (spec.r_min[j], spec.r_max[j]), f"mcR[{k}]")
            vm.bump("mccormick_R")
    if _gang(net, k, opts):
        pairs = [(i, j) for i in free for j in free if i <= j]
        for i, j in pairs[1:]:
            prob.eq(_entry(R, i, j) - _entry(R, *pairs[0]), f"gang[{k}]")
    if opts.psd_on_R:
        one = Lin.constant(np.ones((1, 1)), prob.nvars)
        col = r.reshape(ke, 1)
        prob.psd(vstack([_hcat(R, col), _hcat(col.T, one)]), f"psdR[{k}]")
        vm.bump("psd_R")
    return r


def _hcat(a: Lin, b: Lin) -> Lin:
    return vstack([a.T, b.T]).T


def _gain_mbopf(prob, vm, net, k, Vn: CLin, Vm: CLin, opts):
    e = net.edges[k]
    spec = e.spec
    sv = vm.svr[k]
    D, F = spec.constant_matrices()
    ke = spec.size
    try:
        vbox = voltage_box(net.v_min, net.v_max, sv.delta, e.phases)
        tbox = transformed_box(D, F, vbox)
    except EmptyBox as exc:
        raise InfeasibleBox(f"regulator {e.pair}: {exc}") from None
    sv.vbox, sv.tbox = vbox, tbox
    r = _ratio_vars(prob, vm, net, k, opts, with_R=True)
    R = sv.R
    U, W = Vm.re, Vm.im
    sv.U, sv.W = U, W
    has_hat = bool(np.any(F))

    # secondary voltage box (diagonal of U is the magnitude box already)
    for i in range(ke):
        for j in range(ke):
            if i < j:
                for M, box in ((U, vbox.U), (W, vbox.W)):
                    prob.le(_entry(M, i, j) - box.hi[i, j], f"uwbox[{k}]")
                    prob.le(box.lo[i, j] - _entry(M, i, j), f"uwbox[{k}]")

    # definitional links
    sv.Ut = prob.symmetric_var(f"Ut[{k}]", ke)
    sv.Wt = prob.antisymmetric_var(f"Wt[{k}]", ke)
    prob.eq(sv.Ut - D @ U @ D.T, f"def[{k}]")
    prob.eq(sv.Wt - D @ W @ D.T, f"def[{k}]")
    sv.Ugt = prob.symmetric_var(f"Ugt[{k}]", ke)
    sv.Pst = prob.antisymmetric_var(f"Pst[{k}]", ke)
    gain_re = sv.Ugt + F @ U @ F.T
    gain_im = sv.Pst + F @ W @ F.T
    if has_hat:
        sv.Uh = prob.var(f"Uh[{k}]", (ke, ke))
        sv.Wh = prob.var(f"Wh[{k}]", (ke, ke))
        prob.eq(sv.Uh - D @ U @ F.T, f"def[{k}]")
        prob.eq(sv.Wh - D @ W @ F.T, f"def[{k}]")
        sv.Ugh = prob.var(f"Ugh[{k}]", (ke, ke))
        sv.Psh = prob.var(f"Psh[{k}]", (ke, ke))
        gain_re = gain_re + sv.Ugh + sv.Ugh.T
        gain_im = gain_im + sv.Psh - sv.Psh.T
    prob.eq(Vn.re - gain_re, f"gain[{k}]")
    prob.eq(Vn.im - gain_im, f"gain[{k}]")

    # trilinear envelopes: R entry times transformed voltage entry
    rbox = lambda i, j: (spec.r_min[i] * spec.r_min[j], spec.r_max[i] * spec.r_max[j])
    for i in range(ke):
        for j in range(i, ke):
            add_mccormick(prob, _entry(R, i, j), _entry(sv.Ut, i, j), _entry(sv.Ugt, i, j),
                          rbox(i, j), (tbox.tilde_U.lo[i, j], tbox.tilde_U.hi[i, j]), f"mcT[{k}]")
            vm.bump("mccormick_tilde")
            if i < j:
                add_mccormick(prob, _entry(R, i, j), _entry(sv.Wt, i, j), _entry(sv.Pst, i, j),
                              rbox(i, j), (tbox.tilde_W.lo[i, j], tbox.tilde_W.hi[i, j]), f"mcT[{k}]")
                vm.bump("mccormick_tilde")
    if has_hat:
        for i in range(ke):
            for j in range(ke):
                ri = r[i].reshape(1)
                add_mccormick(prob, ri, _entry(sv.Uh, i, j), _entry(sv.Ugh, i, j),
                              (spec.r_min[i], spec.r_max[i]), (tbox.hat_U.lo[i, j], tbox.hat_U.hi[i, j]), f"mcH[{k}]")
                add_mccormick(prob, ri, _entry(sv.Wh, i, j), _entry(sv.Psh, i, j),
                              (spec.r_min[i], spec.r_max[i]), (tbox.hat_W.lo[i, j], tbox.hat_W.hi[i, j]), f"mcH[{k}]")
                vm.bump("mccormick_hat", 2)


def _gain_ciopf(prob, vm, net, k, Vn: CLin, Vm: CLin, opts):
    spec = net.edges[k].spec
    _ratio_vars(prob, vm, net, k, opts, with_R=False)
    dn, dm = Vn.re.diag(), Vm.re.diag()
    prob.ge(dn - dm * spec.r_min**2, f"ciopf[{k}]")
    prob.ge(dm * spec.r_max**2 - dn, f"ciopf[{k}]")


def _gain_cgopf(prob, vm, net, k, Vn: CLin, Vm: CLin):
    spec = net.edges[k].spec
    opts = BuildOptions(gang={k: True})
    _ratio_vars(prob, vm, net, k, opts, with_R=False)
    lo, hi = float(np.min(spec.r_min)), float(np.max(spec.r_max))
    prob.hermitian_psd(Vn - Vm * lo**2, f"cgopf[{k}]")
    prob.hermitian_psd(Vm * hi**2 - Vn, f"cgopf[{k}]")


# ---------------------------------------------------------------- rank reinforcement

def minor_products(phases: PhaseMask):
    """Bilinear products used by the linearized 2x2 minors, per phase.

    Returns ``{phase: [(label, (matA, i, j), (matB, i, j)), ...]}`` with local
    indices; ``mat`` is ``"U"`` or ``"W"``. Three-phase buses use nine
    products per phase; two-phase buses only the principal-minor triple.
    """
    out = {}
    k = len(phases)
    if k < 2:
        return out
    idx = {p: phases.index(p) for p in phases}
    if k == 2:
        p, q = phases.phases
        a, b = idx[p], idx[q]
        out[p] = [(1, ("U", a, a), ("U", b, b)), (2, ("U", a, b), ("U", a, b)), (3, ("W", a, b), ("W", a, b))]
        return out
    for p in phases:
        a = idx[p]
        r = idx[PhaseMask.right(p)]
        l = idx[PhaseMask.left(p)]
        out[p] = [
            (1, ("U", a, a), ("U", r, r)),
            (2, ("U", a, r), ("U", a, r)),
            (3, ("W", a, r), ("W", a, r)),
            (4, ("U", l, a), ("U", a, r)),
            (5, ("W", a, r), ("W", l, a)),
            (6, ("U", a, a), ("U", l, r)),
            (7, ("U", l, a), ("W", a, r)),
            (8, ("U", a, r), ("W", l, a)),
            (9, ("U", a, a), ("W", l, r)),
        ]
    return out


# signed combinations of X that vanish for rank-1 matrices
MINOR_EQUALITIES = (
    {1: 1.0, 2: -1.0, 3: -1.0},
    {4: 1.0, 5: -1.0, 6: -1.0},
    {7: 1.0, 8: 1.0, 9: -1.0},
)


def minor_residuals(V: np.ndarray, phases: PhaseMask | str = "abc") -> dict[int, list[float]]:
    """Evaluate the linearized minor equalities at a lifted matrix with exact products."""
    phases = PhaseMask(phases) if isinstance(phases, str) else phases
    U, W = V.real, V.imag
    mats = {"U": U, "W": W}
    out = {}
    for p, prods in minor_products(phases).items():
        X = {lab: mats[a[0]][a[1], a[2]] * mats[b[0]][b[1], b[2]] for lab, a, b in prods}
        out[p] = [sum(c * X[l] for l, c in eq.items()) for eq in MINOR_EQUALITIES if set(eq) <= set(X)]
    return out


def add_rank_reinforcement(prob: ConicProblem, vm: VarMap, net: Network, m: int, delta: float) -> int:
    """Add linearized minor equalities and their McCormick envelopes at bus m."""
    if m not in net.svr_secondaries():
        raise NotSvrSecondary(f"bus {m} is not a regulator secondary")
    phases = net.buses[m].phases
    if len(phases) < 2:
        return 0
    start = prob.count()
    box = voltage_box(net.v_min, net.v_max, delta, phases)
    V = vm.V[m]
    mats = {"U": (V.re, box.U), "W": (V.im, box.W)}
    Xm = vm.X.setdefault(m, {})
    for p, prods in minor_products(phases).items():
        X = {}
        for lab, a, b in prods:
            x = prob.var(f"X[{m}][{p}{lab}]", 1)
            X[lab] = x
            Xm[(p, lab)] = x
            (Ma, ba), (Mb, bb) = mats[a[0]], mats[b[0]]
            add_mccormick(prob, _entry(Ma, a[1], a[2]), _entry(Mb, b[1], b[2]), x,
                          (ba.lo[a[1], a[2]], ba.hi[a[1], a[2]]), (bb.lo[b[1], b[2]], bb.hi[b[1], b[2]]), f"mcX[{m}]")
            vm.bump("mccormick_X")
        for eq in MINOR_EQUALITIES:
            if set(eq) <= set(X):
                expr = sum((X[l] * c for l, c in eq.items()), Lin.constant([0.0], prob.nvars))
                prob.eq(expr, f"minor[{m}]")
                vm.bump("minor_eq")
    return prob.count() - start


# ---------------------------------------------------------------- objective

def objective(prob: ConicProblem, vm: VarMap, net: Network, kind: str = "import"):
    """Power import at the slack, optionally plus total DG real output."""
    if kind not in OBJECTIVES:
        raise ValueError(f"unknown objective {kind!r}")
    cost = vm.s[net.slack_bus].re.sum()
    if kind == "import_plus_dg":
        if not vm.sg:
            raise MissingDg("objective import_plus_dg needs at least one DG unit")
        for g in vm.sg.values():
            cost = cost + g.re.sum()
    prob.minimize(cost)


# ---------------------------------------------------------------- exact-point checks

@dataclass
class LiftedPoint:
    """Lifted candidate: bus V, edge I and S, regulator diag(S') and ratios."""

    V: dict[int, np.ndarray]
    I: dict[int, np.ndarray]
    S: dict[int, np.ndarray]
    Sp: dict[int, np.ndarray]
    r: dict[int, np.ndarray]
    s: dict[int, np.ndarray] | None = None
    frak_s: dict[int, np.ndarray] | None = None


def lift(net: Network, voltages, currents, secondary_currents, ratios, injections=None) -> LiftedPoint:
    """Outer products of a physical point: V = v v^H, I = i i^H, S = v_n i^H, S' = v_m i'^H."""
    edges = net.edges
    V = {m: np.outer(v, v.conj()) for m, v in voltages.items()}
    I, S, Sp = {}, {}, {}
    for k, e in enumerate(edges):
        pn = net.buses[e.from_bus].phases.positions(e.phases)
        i = currents[k]
        I[k] = np.outer(i, i.conj())
        S[k] = np.outer(voltages[e.from_bus][pn], i.conj())
        if e.is_svr:
            pm = net.buses[e.to_bus].phases.positions(e.phases)
            Sp[k] = voltages[e.to_bus][pm] * secondary_currents[k].conj()
    frak = None
    if injections is not None:
        frak = {m: np.asarray(s, complex) for m, s in injections.items()}
    point = LiftedPoint(V, I, S, Sp, {k: np.asarray(r, float) for k, r in ratios.items()}, None, frak)
    point.s = _net_injections(net, point)
    return point


def _net_injections(net: Network, p: LiftedPoint) -> dict[int, np.ndarray]:
    edges = net.edges
    out = {}
    for m, bus in net.buses.items():
        f = np.zeros(len(bus.phases), complex)
        for k in net.edges_out(m):
            f[bus.phases.positions(edges[k].phases)] += np.diag(p.S[k])
        for k in net.edges_in(m):
            e = edges[k]
            pos = bus.phases.positions(e.phases)
            f[pos] -= p.Sp[k] if e.is_svr else np.diag(p.S[k] - e.z @ p.I[k])
        out[m] = f
    return out


def _eig_ratio(M: np.ndarray) -> float:
    w = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    if w[-1] <= 0:
        return 1.0
    return float(max(w[-2], 0.0) / w[-1]) if w.size > 1 else 0.0


def rbopf_residuals(net: Network, point) -> dict:
    """Violation of the exact lifted equations and per-edge eigenvalue ratios.

    ``point`` may be a :class:`LiftedPoint` or a :class:`RelaxationSolution`.
    """
    edges = net.edges
    V, I, S, Sp, r = point.V, point.I, point.S, point.Sp, point.r
    res = {"ohm": 0.0, "gain": 0.0, "svr_power": 0.0, "injection": 0.0, "balance": 0.0,
           "slack": 0.0, "vbox": 0.0, "psd": 0.0}
    eig = {}
    for k, e in enumerate(edges):
        pn = net.buses[e.from_bus].phases.positions(e.phases)
        pm = net.buses[e.to_bus].phases.positions(e.phases)
        Vn = V[e.from_bus][np.ix_(pn, pn)]
        Vm = V[e.to_bus][np.ix_(pm, pm)]
        block = np.block([[Vn, S[k]], [S[k].conj().T, I[k]]])
        wmin = np.linalg.eigvalsh(0.5 * (block + block.conj().T))[0]
        res["psd"] = max(res["psd"], float(max(0.0, -wmin)))
        eig[k] = _eig_ratio(block)
        if not e.is_svr:
            Z = e.z
            ohm = Vn + Z @ I[k] @ Z.conj().T - (S[k] @ Z.conj().T + Z @ S[k].conj().T)
            res["ohm"] = max(res["ohm"], float(np.max(np.abs(Vm - ohm))))
        else:
            A = gain_matrix(e.spec, r[k], check=False)
            res["gain"] = max(res["gain"], float(np.max(np.abs(Vn - A @ Vm @ A.conj().T))))
            Ainv = np.linalg.inv(A)
            res["svr_power"] = max(res["svr_power"], float(np.max(np.abs(np.diag(Ainv @ S[k] @ A) - Sp[k]))))
    flows = _net_injections(net, point)
    s_given = point.s if getattr(point, "s", None) is not None else flows
    for m, bus in net.buses.items():
        res["balance"] = max(res["balance"], float(np.max(np.abs(s_given[m] - flows[m]))))
        if m == net.slack_bus:
            v0 = net.slack_voltage
            res["slack"] = max(res["slack"], float(np.max(np.abs(V[m] - np.outer(v0, v0.conj())))))
            continue
        d = np.real(np.diag(V[m]))
        res["vbox"] = max(res["vbox"], float(max(0.0, np.max(net.v_min**2 - d), np.max(d - net.v_max**2))))
        frak = None
        if getattr(point, "frak_s", None) is not None and m in point.frak_s:
            frak = point.frak_s[m]
        elif bus.dg is None:
            frak = -bus.load
        elif getattr(point, "sg", None) and m in point.sg:
            frak = point.sg[m] - bus.load
        if frak is not None:
            inj = frak - np.diag(V[m] @ bus.shunt.conj().T)
            res["injection"] = max(res["injection"], float(np.max(np.abs(s_given[m] - inj))))
    non_svr = [eig[k] for k, e in enumerate(edges) if not e.is_svr]
    res["eig_ratio"] = eig
    res["eig_ratio_avg"] = float(np.mean(non_svr)) if non_svr else 0.0
    res["max"] = max(v for key, v in res.items() if key not in ("eig_ratio", "eig_ratio_avg"))
    return res


def point_vector(prob: ConicProblem, vm: VarMap, net: Network, point: LiftedPoint, delta=None) -> np.ndarray:
    """Fill the decision vector with a lifted exact point and its exact auxiliaries.

    Used to check that exact points satisfy every relaxation row.
    """
    x = np.zeros(prob.nvars)

    def put_real(name, values):
        start, count = prob.blocks[name]
        x[start:start + count] = np.asarray(values, float).reshape(-1)

    def put_sym(name, M):
        iu = np.triu_indices(M.shape[0])
        put_real(name, np.asarray(M)[iu])

    def put_anti(name, M):
        iu = np.triu_indices(M.shape[0], 1)
        if len(iu[0]):
            put_real(name, np.asarray(M)[iu])

    def put_herm(name, H):
        put_sym(name + ".re", H.real)
        put_anti(name + ".im", H.imag)

    def put_cplx(name, Z):
        put_real(name + ".re", np.real(Z))
        put_real(name + ".im", np.imag(Z))

    for m, Vm_ in point.V.items():
        put_herm(f"V[{m}]", Vm_)
        put_cplx(f"s[{m}]", point.s[m])
        if f"sg[{m}].re" in prob.blocks:
            put_cplx(f"sg[{m}]", point.frak_s[m] + net.buses[m].load)
    for k, e in enumerate(net.edges):
        put_herm(f"I[{k}]", point.I[k])
        put_cplx(f"S[{k}]", point.S[k])
        if not e.is_svr:
            continue
        put_cplx(f"Sp[{k}]", point.Sp[k])
        r = point.r[k]
        put_real(f"r[{k}]", r)
        if f"R[{k}]" in prob.blocks:
            put_sym(f"R[{k}]", np.outer(r, r))
        if f"Ut[{k}]" in prob.blocks:
            D, F = e.spec.constant_matrices()
            pm = net.buses[e.to_bus].phases.positions(e.phases)
            Vm_ = point.V[e.to_bus][np.ix_(pm, pm)]
            U, W = Vm_.real, Vm_.imag
            Ut, Wt = D @ U @ D.T, D @ W @ D.T
            Rm = np.outer(r, r)
            put_sym(f"Ut[{k}]", Ut)
            put_anti(f"Wt[{k}]", Wt)
            put_sym(f"Ugt[{k}]", Rm * Ut)
            put_anti(f"Pst[{k}]", Rm * Wt)
            if f"Uh[{k}]" in prob.blocks:
                Uh, Wh = D @ U @ F.T, D @ W @ F.T
                put_real(f"Uh[{k}]", Uh)
                put_real(f"Wh[{k}]", Wh)
                put_real(f"Ugh[{k}]", r[:, None] * Uh)
                put_real(f"Psh[{k}]", r[:, None] * Wh)
    for m, Xm in vm.X.items():
        V = point.V[m]
        mats = {"U": V.real, "W": V.imag}
        for p, prods in minor_products(net.buses[m].phases).items():
            for lab, a, b in prods:
                put_real(f"X[{m}][{p}{lab}]", [mats[a[0]][a[1], a[2]] * mats[b[0]][b[1], b[2]]])
    return x
