"""McCormick polyhedra for bilinear terms x = u * w over a box."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBox

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class Envelope:
    """Half-spaces ``cu*u + cw*w + cx*x + c0 <= 0``.

    Rows 0-3 are the box on u and w, rows 4-5 the under-estimators and rows
    6-7 the over-estimators.
    """

    u_min: float
    u_max: float
    w_min: float
    w_max: float
    rows: np.ndarray

    @property
    def u_fixed(self) -> bool:
        return self.u_max - self.u_min <= 1e-12

    @property
    def w_fixed(self) -> bool:
        return self.w_max - self.w_min <= 1e-12

    def x_interval(self, u: float, w: float) -> tuple[float, float]:
        lo = max(self.u_min * w + u * self.w_min - self.u_min * self.w_min,
                 self.u_max * w + u * self.w_max - self.u_max * self.w_max)
        hi = min(self.u_max * w + u * self.w_min - self.u_max * self.w_min,
                 self.u_min * w + u * self.w_max - self.u_min * self.w_max)
        return lo, hi


def mccormick_rows(u_min: float, u_max: float, w_min: float, w_max: float) -> Envelope:
    if u_min > u_max or w_min > w_max:
        raise EmptyBox(f"empty box u in [{u_min}, {u_max}], w in [{w_min}, {w_max}]")
    rows = np.array([
        # box on u and w
        [1.0, 0.0, 0.0, -u_max],
        [-1.0, 0.0, 0.0, u_min],
        [0.0, 1.0, 0.0, -w_max],
        [0.0, -1.0, 0.0, w_min],
        # u_min w + u w_min - u_min w_min <= x
        [w_min, u_min, -1.0, -u_min * w_min],
        # u_max w + u w_max - u_max w_max <= x
        [w_max, u_max, -1.0, -u_max * w_max],
        # x <= u_max w + u w_min - u_max w_min
        [-w_min, -u_max, 1.0, u_max * w_min],
        # x <= u_min w + u w_max - u_min w_max
        [-w_max, -u_min, 1.0, u_min * w_max],
    ])
    return Envelope(float(u_min), float(u_max), float(w_min), float(w_max), rows)


def check_envelope(u: float, w: float, x: float, env: Envelope, tol: float = FEAS_TOL) -> tuple[bool, float]:
    """Return (feasible, worst violation) for a point against the envelope."""
    vals = env.rows @ np.array([u, w, x, 1.0])
    worst = float(max(0.0, vals.max()))
    return worst <= tol, worst
