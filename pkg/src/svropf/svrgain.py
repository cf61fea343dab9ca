"""Voltage-gain algebra of ideal step-voltage regulators.

A regulator on edge (n, m) relates primary and secondary quantities through
``v_n = A v_m`` and ``i_n = A^{-H} i_m'`` with ``A = diag(r) D + F``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RatioOutOfBounds, SingularGain, TapOutOfRange

TAP_STEP = 0.00625
MAX_TAP = 16

SVR_TYPES = ("wye", "closed_delta", "open_delta")
VARIANTS = ("A", "B")

_D = {
    "wye": np.eye(3),
    "closed_delta": np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0], [-1.0, 0.0, 1.0]]),
    "open_delta": np.array([[1.0, -1.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 1.0]]),
}
_F = {
    "wye": np.zeros((3, 3)),
    "closed_delta": np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]),
    "open_delta": np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
}


@dataclass
class SvrSpec:
    """Regulator type and ratio limits.

    ``r_min``/``r_max`` hold one entry per regulated phase: the number of
    phases for wye units, always three for delta units. For open-delta the
    middle (b) entry is pinned to 1.
    """

    svr_type: str = "wye"
    variant: str = "B"
    gang: bool = False
    r_min: np.ndarray = field(default_factory=lambda: np.full(3, 0.9))
    r_max: np.ndarray = field(default_factory=lambda: np.full(3, 1.1))

    def __post_init__(self):
        if self.svr_type not in SVR_TYPES:
            raise ValueError(f"unknown SVR type {self.svr_type!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown SVR variant {self.variant!r}")
        self.r_min = np.array(self.r_min, dtype=float).reshape(-1)
        self.r_max = np.array(self.r_max, dtype=float).reshape(-1)
        if self.r_min.shape != self.r_max.shape:
            raise ValueError("r_min and r_max differ in length")
        if self.svr_type != "wye" and self.r_min.size != 3:
            raise ValueError(f"{self.svr_type} regulators need three ratio entries")
        if self.svr_type == "open_delta":
            self.r_min[1] = self.r_max[1] = 1.0
        if np.any(self.r_min > self.r_max):
            raise ValueError("r_min exceeds r_max")
        if np.any(self.r_min <= 0):
            raise ValueError("ratios must be positive")

    @property
    def size(self) -> int:
        return self.r_min.size

    @property
    def free_phases(self) -> list[int]:
        """Indices whose ratio is an actual decision (open-delta b is fixed)."""
        return [k for k in range(self.size) if self.r_max[k] > self.r_min[k]] or list(range(self.size))

    def constant_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        return constant_matrices(self.svr_type, self.size)


def constant_matrices(svr_type: str, size: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Return (D, F) for a regulator type.

    Wye units on fewer than three phases use the leading principal block of
    the wye matrices, i.e. identity and zero.
    """
    if svr_type not in SVR_TYPES:
        raise ValueError(f"unknown SVR type {svr_type!r}")
    if svr_type != "wye" and size != 3:
        raise ValueError(f"{svr_type} regulators are three-phase only")
    return _D[svr_type][:size, :size].copy(), _F[svr_type][:size, :size].copy()


def gain_matrix(spec: SvrSpec, r, check: bool = True) -> np.ndarray:
    r = np.asarray(r, dtype=float).reshape(-1)
    if r.size != spec.size:
        raise ValueError(f"expected {spec.size} ratios, got {r.size}")
    if check and (np.any(r < spec.r_min - 1e-12) or np.any(r > spec.r_max + 1e-12)):
        raise RatioOutOfBounds(f"ratios {r} outside [{spec.r_min}, {spec.r_max}]")
    D, F = spec.constant_matrices()
    return np.diag(r) @ D + F


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def ratio_to_tap(r: float, variant: str = "B") -> int:
    """Integer tap for an effective turns ratio.

    Type-A uses ``+(1 - r)/step``, type-B ``-(1 - r)/step``.
    """
    sign = 1.0 if variant == "A" else -1.0
    if variant not in VARIANTS:
        raise ValueError(f"unknown SVR variant {variant!r}")
    return _round_half_away(sign * (1.0 - float(r)) / TAP_STEP)


def tap_to_ratio(tap: int, variant: str = "B") -> float:
    if variant not in VARIANTS:
        raise ValueError(f"unknown SVR variant {variant!r}")
    if int(tap) != tap or abs(tap) > MAX_TAP:
        raise TapOutOfRange(f"tap {tap} outside [-{MAX_TAP}, {MAX_TAP}]")
    sign = 1.0 if variant == "A" else -1.0
    return 1.0 - sign * TAP_STEP * int(tap)


def apply_gains(A: np.ndarray, v_secondary, i_secondary):
    """Map secondary voltage/current to the primary side."""
    A = np.asarray(A)
    v_secondary = np.asarray(v_secondary, dtype=complex)
    i_secondary = np.asarray(i_secondary, dtype=complex)
    try:
        cond = np.linalg.cond(A)
    except np.linalg.LinAlgError as exc:
        raise SingularGain(str(exc)) from exc
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularGain(f"gain matrix is singular (cond={cond:.3g})")
    v_primary = A @ v_secondary
    i_primary = np.linalg.solve(A.conj().T, i_secondary)
    return v_primary, i_primary
