"""Entry-wise boxes on lifted regulator-secondary voltages.

Under phase separation (adjacent angle differences within 120 +/- delta
degrees) and magnitude limits, every entry of ``U = Re V`` and ``W = Im V``
lies in a closed interval. Images under the constant gain matrices
(``D U D^T``, ``D W D^T``, ``D U F^T``, ``D W F^T``) are boxed by sign-split
interval arithmetic over the independent entries of U and W.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DeltaOutOfRange, EmptyBox
from .netmodel import PhaseMask


@dataclass
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, float)
        self.hi = np.asarray(self.hi, float)
        if np.any(self.lo > self.hi + 1e-12):
            raise EmptyBox("lower bound exceeds upper bound")

    def contains(self, x, tol: float = 1e-12) -> bool:
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def violation(self, x) -> float:
        return float(max(0.0, np.max(self.lo - x), np.max(x - self.hi)))


@dataclass
class VoltageBox:
    U: Box
    W: Box
    phases: PhaseMask

    @property
    def U_min(self):
        return self.U.lo

    @property
    def U_max(self):
        return self.U.hi

    @property
    def W_min(self):
        return self.W.lo

    @property
    def W_max(self):
        return self.W.hi


@dataclass
class TransformedBox:
    tilde_U: Box
    tilde_W: Box
    hat_U: Box
    hat_W: Box


def voltage_box(v_min: float, v_max: float, delta: float, phases: PhaseMask | str = "abc") -> VoltageBox:
    """Boxes on U and W for magnitudes in [v_min, v_max] and separation ``delta`` (degrees)."""
    if not 0 < v_min <= v_max:
        raise EmptyBox("need 0 < v_min <= v_max")
    if not 0 <= delta <= 30:
        raise DeltaOutOfRange(f"delta={delta} outside [0, 30] degrees")
    phases = PhaseMask(phases) if isinstance(phases, str) else phases
    k = len(phases)
    lo_u, hi_u = np.zeros((k, k)), np.zeros((k, k))
    lo_w, hi_w = np.zeros((k, k)), np.zeros((k, k))
    plus, minus = np.radians(120 + delta), np.radians(120 - delta)
    # (phi, right(phi)) entries; angle difference within [120 - delta, 120 + delta]
    u_rng = (v_max**2 * np.cos(plus), v_min**2 * np.cos(minus))
    w_rng = (v_min**2 * np.sin(plus), v_max**2 * np.sin(minus))
    for i, p in enumerate(phases):
        lo_u[i, i], hi_u[i, i] = v_min**2, v_max**2
        for j, q in enumerate(phases):
            if i == j:
                continue
            lo_u[i, j], hi_u[i, j] = u_rng
            if q == PhaseMask.right(p):
                lo_w[i, j], hi_w[i, j] = w_rng
            else:
                # W is antisymmetric: (right(phi), phi) entries flip sign
                lo_w[i, j], hi_w[i, j] = -w_rng[1], -w_rng[0]
    return VoltageBox(Box(lo_u, hi_u), Box(lo_w, hi_w), phases)


def _sym_basis(k):
    """Independent entries of a symmetric k x k matrix and their unit matrices."""
    out = []
    for i in range(k):
        for j in range(i, k):
            E = np.zeros((k, k))
            E[i, j] = E[j, i] = 1.0
            out.append(((i, j), E))
    return out


def _antisym_basis(k):
    out = []
    for i in range(k):
        for j in range(i + 1, k):
            E = np.zeros((k, k))
            E[i, j], E[j, i] = 1.0, -1.0
            out.append(((i, j), E))
    return out


def _interval_image(left, right, basis, box: Box) -> Box:
    """Bound ``left @ X @ right.T`` where X = sum_k x_k E_k, x_k in its box."""
    shape = (left.shape[0], right.shape[0])
    lo, hi = np.zeros(shape), np.zeros(shape)
    for (i, j), E in basis:
        coef = left @ E @ right.T
        xlo, xhi = box.lo[i, j], box.hi[i, j]
        lo += np.where(coef > 0, coef * xlo, coef * xhi)
        hi += np.where(coef > 0, coef * xhi, coef * xlo)
    return Box(lo, hi)


def transformed_box(D: np.ndarray, F: np.ndarray, box: VoltageBox) -> TransformedBox:
    k = D.shape[0]
    sym, anti = _sym_basis(k), _antisym_basis(k)
    return TransformedBox(
        tilde_U=_interval_image(D, D, sym, box.U),
        tilde_W=_interval_image(D, D, anti, box.W),
        hat_U=_interval_image(D, F, sym, box.U),
        hat_W=_interval_image(D, F, anti, box.W),
    )


def sample_separated_voltages(rng: np.random.Generator, n: int, v_min: float, v_max: float,
                              delta: float, phases: PhaseMask | str = "abc") -> np.ndarray:
    """Random phasors meeting the magnitude limits and phase separation.

    Three-phase draws use rejection so the closing difference (c to a) also
    lies in the window. Returns an (n, k) complex array.
    """
    phases = PhaseMask(phases) if isinstance(phases, str) else phases
    k = len(phases)
    out = np.empty((0, k), complex)
    while out.shape[0] < n:
        m = 2 * (n - out.shape[0]) + 16
        mags = rng.uniform(v_min, v_max, size=(m, k))
        base = rng.uniform(-180, 180, size=m)
        if k == 3:
            d_ab = rng.uniform(120 - delta, 120 + delta, size=m)
            d_bc = rng.uniform(120 - delta, 120 + delta, size=m)
            d_ca = 360 - d_ab - d_bc
            ok = np.abs(d_ca - 120) <= delta
            ang = np.stack([base, base - d_ab, base - d_ab - d_bc], axis=1)[ok]
            mags = mags[ok]
        elif k == 2:
            p, q = phases.phases
            d = rng.uniform(120 - delta, 120 + delta, size=m)
            # angle(p) - angle(q) = d when q = right(p), else -d
            sign = 1.0 if q == PhaseMask.right(p) else -1.0
            ang = np.stack([base, base - sign * d], axis=1)
        else:
            ang = base[:, None]
        out = np.vstack([out, mags * np.exp(1j * np.radians(ang))])
    return out[:n]
