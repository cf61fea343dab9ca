import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from svropf.envelope import check_envelope, mccormick_rows
from svropf.errors import EmptyBox

finite = st.floats(-5, 5, allow_nan=False)


@st.composite
def boxes(draw):
    a, b = sorted((draw(finite), draw(finite)))
    c, d = sorted((draw(finite), draw(finite)))
    return a, b, c, d


def test_unit_box_corner_and_center():
    env = mccormick_rows(0, 1, 0, 1)
    assert check_envelope(1, 1, 1, env)[0]
    assert not check_envelope(1, 1, 0.99, env)[0]
    assert not check_envelope(1, 1, 1.01, env)[0]
    for x, ok in [(0.0, True), (0.25, True), (0.5, True), (-0.01, False), (0.51, False)]:
        assert check_envelope(0.5, 0.5, x, env)[0] is ok
    assert env.x_interval(0.5, 0.5) == (0.0, 0.5)


def test_ratio_product_containment(rng):
    env = mccormick_rows(0.9, 1.1, 0.9, 1.1)
    u, w = rng.uniform(0.9, 1.1, (2, 10_000))
    vals = env.rows @ np.vstack([u, w, u * w, np.ones_like(u)])
    assert vals.max() <= 1e-12


def test_checker_reports_violation():
    env = mccormick_rows(0.9, 1.1, -2, 3)
    assert check_envelope(0.9, -2, 0.9 * -2, env) == (True, 0.0)
    ok, worst = check_envelope(0.9, -2, 0.9 * -2 + 1, env)
    assert not ok and worst == pytest.approx(1.0)


def test_empty_box():
    with pytest.raises(EmptyBox):
        mccormick_rows(1, 0, 0, 1)


def test_degenerate_box_is_exact():
    env = mccormick_rows(1.0, 1.0, -0.5, 0.7)
    assert env.u_fixed and not env.w_fixed
    for w in np.linspace(-0.5, 0.7, 7):
        lo, hi = env.x_interval(1.0, w)
        assert lo == pytest.approx(w) and hi == pytest.approx(w)


@settings(max_examples=300, deadline=None)
@given(box=boxes(), s=st.floats(0, 1), t=st.floats(0, 1))
def test_containment(box, s, t):
    a, b, c, d = box
    u, w = a + s * (b - a), c + t * (d - c)
    assert check_envelope(u, w, u * w, mccormick_rows(*box), tol=1e-9)[0]


@settings(max_examples=200, deadline=None)
@given(box=boxes(), cu=st.booleans(), cw=st.booleans())
def test_corner_exactness(box, cu, cw):
    a, b, c, d = box
    env = mccormick_rows(*box)
    u, w = (b if cu else a), (d if cw else c)
    lo, hi = env.x_interval(u, w)
    assert lo == pytest.approx(u * w, abs=1e-9) and hi == pytest.approx(u * w, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(box=boxes(), s=st.floats(0, 1), t=st.floats(0, 1))
def test_hull_interval_matches_row_scan(box, s, t):
    a, b, c, d = box
    assume(b - a > 1e-3 and d - c > 1e-3)
    u, w = a + s * (b - a), c + t * (d - c)
    env = mccormick_rows(*box)
    xs = np.linspace(-40, 40, 80_001)
    pts = np.vstack([np.full_like(xs, u), np.full_like(xs, w), xs, np.ones_like(xs)])
    feasible = xs[np.all(env.rows @ pts <= 1e-9, axis=0)]
    lo, hi = env.x_interval(u, w)
    step = xs[1] - xs[0]
    assert feasible.size > 0 or hi - lo < step
    if feasible.size:
        assert abs(feasible.min() - lo) <= step and abs(feasible.max() - hi) <= step
