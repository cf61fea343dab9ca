"""Solver-agnostic conic programs: linear rows, second-order cones, PSD blocks.

Constraints are stored as affine expressions that must lie in a cone:

* ``zero``   -- expression == 0
* ``nonneg`` -- expression >= 0
* ``soc``    -- expr[0] >= ||expr[1:]||
* ``psd``    -- square symmetric expression is positive semidefinite

The default backend calls Clarabel directly; ``cvxpy`` is available as a
second backend. Select with ``solve(..., backend=...)`` or the
``SVROPF_SOLVER`` environment variable.
"""
from __future__ import annotations

import io
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import SolverFailure
from .linexpr import CLin, Lin, embed_hermitian

DEFAULT_TOL = 1e-8
BACKENDS = ("clarabel", "cvxpy")


@dataclass
class Constraint:
    cone: str
    expr: Lin
    tag: str = ""


class ConicProblem:
    """Real decision vector plus cone constraints and a linear objective."""

    def __init__(self, name: str = ""):
        self.name = name
        self.nvars = 0
        self.blocks: dict[str, tuple[int, int]] = {}
        self.constraints: list[Constraint] = []
        self.objective: Lin | None = None

    # ------------------------------------------------------------ variables
    def _alloc(self, name: str, count: int) -> int:
        if name in self.blocks:
            raise KeyError(f"variable block {name!r} already exists")
        start = self.nvars
        self.blocks[name] = (start, count)
        self.nvars += count
        return start

    def var(self, name: str, shape) -> Lin:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        size = int(np.prod(shape))
        start = self._alloc(name, size)
        return Lin.from_indices(np.arange(start, start + size), shape, self.nvars)

    def symmetric_var(self, name: str, k: int) -> Lin:
        """Symmetric k x k matrix parametrized by its upper triangle."""
        iu = np.triu_indices(k)
        start = self._alloc(name, len(iu[0]))
        idx = np.empty((k, k), dtype=int)
        idx[iu] = np.arange(start, start + len(iu[0]))
        idx.T[iu] = idx[iu]
        return Lin.from_indices(idx, (k, k), self.nvars)

    def antisymmetric_var(self, name: str, k: int) -> Lin:
        iu = np.triu_indices(k, 1)
        n = len(iu[0])
        start = self._alloc(name, n)
        rows = np.arange(k * k).reshape(k, k)
        r_up, r_lo = rows[iu], rows.T[iu]
        cols = np.arange(start, start + n)
        coef = sp.csr_matrix(
            (np.r_[np.ones(n), -np.ones(n)], (np.r_[r_up, r_lo], np.r_[cols, cols])),
            shape=(k * k, self.nvars),
        )
        return Lin(coef, np.zeros((k, k)))

    def hermitian_var(self, name: str, k: int) -> CLin:
        """Hermitian k x k matrix: real symmetric part plus antisymmetric imaginary part."""
        re = self.symmetric_var(name + ".re", k)
        im = self.antisymmetric_var(name + ".im", k)
        return CLin(re, im)

    def complex_var(self, name: str, shape) -> CLin:
        return CLin(self.var(name + ".re", shape), self.var(name + ".im", shape))

    # ------------------------------------------------------------ constraints
    def _add(self, cone, expr: Lin, tag):
        self.constraints.append(Constraint(cone, expr.flatten() if cone != "psd" else expr, tag))

    def eq(self, expr, tag: str = ""):
        if isinstance(expr, CLin):
            self._add("zero", expr.re, tag)
            self._add("zero", expr.im, tag)
        else:
            self._add("zero", expr, tag)

    def le(self, expr: Lin, tag: str = ""):
        """expr <= 0"""
        self._add("nonneg", -expr, tag)

    def ge(self, expr: Lin, tag: str = ""):
        """expr >= 0"""
        self._add("nonneg", expr, tag)

    def soc(self, t: Lin, y: Lin, tag: str = ""):
        from .linexpr import concat
        self._add("soc", concat([t.flatten(), y.flatten()]), tag)

    def psd(self, M: Lin, tag: str = ""):
        if len(M.shape) != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("PSD block must be square")
        self._add("psd", M, tag)

    def hermitian_psd(self, H: CLin, tag: str = ""):
        self.psd(embed_hermitian(H), tag)

    def minimize(self, expr: Lin):
        self.objective = expr.flatten().sum() if expr.size != 1 else expr.flatten()

    # ------------------------------------------------------------ summaries
    def count(self, cone: str | None = None, tag: str | None = None) -> int:
        """Number of scalar rows (or PSD blocks) matching cone and tag prefix."""
        total = 0
        for c in self.constraints:
            if cone is not None and c.cone != cone:
                continue
            if tag is not None and not c.tag.startswith(tag):
                continue
            total += 1 if c.cone == "psd" else c.expr.size
        return total

    def blocks_of(self, cone: str, tag: str | None = None) -> list[Constraint]:
        return [c for c in self.constraints if c.cone == cone and (tag is None or c.tag.startswith(tag))]

    def residuals(self, x) -> dict[str, float]:
        """Worst violation per cone type at the point x."""
        out = {"zero": 0.0, "nonneg": 0.0, "soc": 0.0, "psd": 0.0}
        for c in self.constraints:
            v = c.expr.value(x)
            if c.cone == "zero":
                viol = float(np.max(np.abs(v))) if v.size else 0.0
            elif c.cone == "nonneg":
                viol = float(max(0.0, -np.min(v))) if v.size else 0.0
            elif c.cone == "soc":
                viol = float(max(0.0, np.linalg.norm(v[1:]) - v[0]))
            else:
                viol = float(max(0.0, -np.linalg.eigvalsh(0.5 * (v + v.T))[0]))
            out[c.cone] = max(out[c.cone], viol)
        return out

    # ------------------------------------------------------------ serialization
    def to_text(self) -> str:
        """Byte-stable sparse text form: one line per constraint row and cone."""
        buf = io.StringIO()
        buf.write(f"problem {self.name}\nvars {self.nvars}\n")
        for name, (start, count) in self.blocks.items():
            buf.write(f"block {name} {start} {count}\n")
        if self.objective is not None:
            buf.write("objective " + _row_text(self.objective, 0) + "\n")
        for c in self.constraints:
            e = c.expr
            if c.cone == "psd":
                buf.write(f"psd {e.shape[0]} {c.tag}\n")
            else:
                buf.write(f"{c.cone} {e.size} {c.tag}\n")
            for r in range(e.size):
                buf.write("  " + _row_text(e, r) + "\n")
        return buf.getvalue()


def _fmt(v: float) -> str:
    return repr(float(v))


def _row_text(e: Lin, r: int) -> str:
    coef = e.coef.getrow(r).tocoo()
    order = np.argsort(coef.col, kind="stable")
    terms = " ".join(f"{int(coef.col[k])}:{_fmt(coef.data[k])}" for k in order if coef.data[k] != 0)
    return f"{_fmt(e.const.reshape(-1)[r])} | {terms}"


# ---------------------------------------------------------------- embedding

def hermitian_embedding(n: int) -> sp.csr_matrix:
    """Linear map from the Hermitian parametrization to the real 2n x 2n block.

    The parametrization is ``[diag(U), U[iu], W[iu]]`` (``iu`` = strict upper
    triangle, row-major); the output is the row-major flattening of
    ``[[U, -W], [W, U]]``.
    """
    if n < 1:
        raise ValueError("block size must be positive")
    p = ConicProblem()
    H = p.hermitian_var("H", n)
    # reorder columns from (upper triangle incl. diag, strict upper of W) to (diag, U off, W off)
    iu_all = np.triu_indices(n)
    diag_cols = [k for k, (i, j) in enumerate(zip(*iu_all)) if i == j]
    off_cols = [k for k, (i, j) in enumerate(zip(*iu_all)) if i != j]
    w_cols = list(range(len(iu_all[0]), p.nvars))
    perm = np.array(diag_cols + off_cols + w_cols)
    M = embed_hermitian(H).coef
    return M[:, perm].tocsr()


def hermitian_parameters(H: np.ndarray) -> np.ndarray:
    n = H.shape[0]
    iu = np.triu_indices(n, 1)
    return np.concatenate([np.real(np.diag(H)), np.real(H[iu]), np.imag(H[iu])])


def embed_matrix(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, complex)
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


# ---------------------------------------------------------------- solving

@dataclass
class ConicSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    accuracy: dict = field(default_factory=dict)
    solve_time: float = 0.0
    backend: str = ""
    raw_status: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, expr):
        return expr.value(self.x)


def _svec_rows(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major flat positions and scales for Clarabel's triangular PSD vectorization."""
    pos, scale = [], []
    for j in range(k):
        for i in range(j + 1):
            pos.append(i * k + j)
            scale.append(1.0 if i == j else math.sqrt(2.0))
    return np.array(pos), np.array(scale)


def _psd_sym(e: Lin) -> Lin:
    return (e + e.T) * 0.5


def _dedupe(rows: sp.csr_matrix, rhs: np.ndarray):
    """Drop exactly repeated rows (same coefficients and right-hand side)."""
    seen, keep = set(), []
    rows = rows.tocsr()
    rows.sort_indices()
    for r in range(rows.shape[0]):
        a, b = rows.indptr[r], rows.indptr[r + 1]
        key = (rows.indices[a:b].tobytes(), rows.data[a:b].tobytes(), float(rhs[r]))
        if key in seen:
            continue
        seen.add(key)
        keep.append(r)
    keep = np.array(keep, dtype=int)
    return rows[keep], rhs[keep]


def _standard_form(problem: ConicProblem):
    """Stack constraints as s = b - A x in cones (zero, nonneg, soc..., psd...)."""
    n = problem.nvars
    parts = {"zero": [], "nonneg": []}
    socs, psds = [], []
    for c in problem.constraints:
        e = c.expr
        coef = sp.csr_matrix((e.coef.data, e.coef.indices, e.coef.indptr), shape=(e.coef.shape[0], n))
        if c.cone in parts:
            parts[c.cone].append((coef, e.const.reshape(-1)))
        elif c.cone == "soc":
            socs.append((coef, e.const.reshape(-1)))
        else:
            k = e.shape[0]
            s = _psd_sym(e)
            pos, scale = _svec_rows(k)
            scoef = sp.diags(scale) @ sp.csr_matrix(
                (s.coef.data, s.coef.indices, s.coef.indptr), shape=(s.coef.shape[0], n))[pos]
            psds.append((k, scoef, s.const.reshape(-1)[pos] * scale))
    blocks, cones = [], []
    for name in ("zero", "nonneg"):
        if not parts[name]:
            continue
        coef = sp.vstack([p[0] for p in parts[name]], format="csr")
        const = np.concatenate([p[1] for p in parts[name]])
        # rows with no variables are checked, not sent to the solver
        live = np.diff(coef.indptr) > 0
        dead = const[~live]
        if name == "zero" and dead.size and np.max(np.abs(dead)) > 1e-9:
            raise SolverFailure("constant equality row is violated", status="infeasible")
        if name == "nonneg" and dead.size and np.min(dead) < -1e-9:
            raise SolverFailure("constant inequality row is violated", status="infeasible")
        coef, const = _dedupe(coef[live], const[live])
        blocks.append((coef, const))
        cones.append((name, coef.shape[0]))
    for coef, const in socs:
        blocks.append((coef, const))
        cones.append(("soc", coef.shape[0]))
    for k, coef, const in psds:
        blocks.append((coef, const))
        cones.append(("psd", k))
    if blocks:
        # expression e = coef x + const lies in the cone; s = b - A x with A = -coef
        A = -sp.vstack([b[0] for b in blocks], format="csc")
        b = np.concatenate([b[1] for b in blocks])
    else:
        A, b = sp.csc_matrix((0, n)), np.zeros(0)
    if problem.objective is None:
        q, q0 = np.zeros(n), 0.0
    else:
        obj = problem.objective
        q = np.zeros(n)
        row = obj.coef.tocoo()
        np.add.at(q, row.col, row.data)
        q0 = float(obj.const.reshape(-1)[0])
    return A, b, cones, q, q0


_CLARABEL_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def _solve_clarabel(problem: ConicProblem, tol: float, verbose: bool):
    import clarabel

    A, b, cones, q, q0 = _standard_form(problem)
    cl = []
    for name, dim in cones:
        if name == "zero":
            cl.append(clarabel.ZeroConeT(dim))
        elif name == "nonneg":
            cl.append(clarabel.NonnegativeConeT(dim))
        elif name == "soc":
            cl.append(clarabel.SecondOrderConeT(dim))
        else:
            cl.append(clarabel.PSDTriangleConeT(dim))
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.max_iter = 400
    P = sp.csc_matrix((problem.nvars, problem.nvars))
    t0 = time.perf_counter()
    solver = clarabel.DefaultSolver(P, q, A, b, cl, settings)
    res = solver.solve()
    elapsed = time.perf_counter() - t0
    raw = str(res.status)
    status = _CLARABEL_STATUS.get(raw, "numerical_limit")
    x = np.array(res.x)
    info = {"iterations": int(res.iterations), "solver_time": float(res.solve_time),
            "r_prim": float(res.r_prim), "r_dual": float(res.r_dual),
            "gap": abs(float(res.obj_val) - float(res.obj_val_dual))}
    obj = float(res.obj_val) + q0 if status == "optimal" else None
    return status, raw, x, obj, info, elapsed


def _solve_cvxpy(problem: ConicProblem, tol: float, verbose: bool, solver: str | None = None):
    import cvxpy as cp

    n = problem.nvars
    x = cp.Variable(n)
    cons = []
    for c in problem.constraints:
        e = c.expr
        coef = sp.csr_matrix((e.coef.data, e.coef.indices, e.coef.indptr), shape=(e.coef.shape[0], n))
        flat = coef @ x + e.const.reshape(-1)
        if c.cone == "zero":
            cons.append(flat == 0)
        elif c.cone == "nonneg":
            cons.append(flat >= 0)
        elif c.cone == "soc":
            cons.append(cp.SOC(flat[0], flat[1:]))
        else:
            k = e.shape[0]
            M = cp.reshape(flat, (k, k), order="C")
            cons.append(0.5 * (M + M.T) >> 0)
    obj = problem.objective
    q = np.zeros(n)
    q0 = 0.0
    if obj is not None:
        row = obj.coef.tocoo()
        np.add.at(q, row.col, row.data)
        q0 = float(obj.const.reshape(-1)[0])
    prob = cp.Problem(cp.Minimize(q @ x), cons)
    name = solver or os.environ.get("SVROPF_CVXPY_SOLVER", "CLARABEL")
    t0 = time.perf_counter()
    try:
        prob.solve(solver=name, verbose=verbose)
    except cp.error.SolverError as exc:
        raise SolverFailure(f"cvxpy/{name} failed: {exc}", status="numerical_limit") from exc
    elapsed = time.perf_counter() - t0
    raw = str(prob.status)
    status = {"optimal": "optimal", "optimal_inaccurate": "optimal", "infeasible": "infeasible",
              "infeasible_inaccurate": "infeasible", "unbounded": "unbounded",
              "unbounded_inaccurate": "unbounded"}.get(raw, "numerical_limit")
    xv = None if x.value is None else np.asarray(x.value, float)
    objv = float(prob.value) + q0 if status == "optimal" else None
    return status, raw, xv, objv, {"solver": name}, elapsed


def solve(problem: ConicProblem, tol: float = DEFAULT_TOL, backend: str | None = None,
          verbose: bool = False, check: bool = True) -> ConicSolution:
    """Solve the problem; raise :class:`SolverFailure` unless it is optimal.

    With ``check`` the returned point is re-verified against every cone; the
    worst violations are stored in ``accuracy``.
    """
    backend = (backend or os.environ.get("SVROPF_SOLVER") or "clarabel").lower()
    if backend not in BACKENDS:
        raise SolverFailure(f"unknown solver backend {backend!r}", status="numerical_limit")
    if backend == "clarabel":
        status, raw, x, obj, info, elapsed = _solve_clarabel(problem, tol, verbose)
    else:
        status, raw, x, obj, info, elapsed = _solve_cvxpy(problem, tol, verbose)
    sol = ConicSolution(status, x, obj, dict(info), elapsed, backend, raw)
    if status != "optimal":
        raise SolverFailure(f"solver returned {raw}", status=status, diagnostics={"raw": raw, **info})
    if check and x is not None:
        sol.accuracy.update({f"viol_{k}": v for k, v in problem.residuals(x).items()})
    return sol
