import numpy as np
import pytest

from svropf.conic import (ConicProblem, embed_matrix, hermitian_embedding, hermitian_parameters, solve)
from svropf.errors import SolverFailure
from svropf.linexpr import CLin, Lin

BACKENDS = ["clarabel", "cvxpy"]


def random_hermitian(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (A + A.conj().T)


def test_embedding_map_matches_dense(rng):
    for n in (1, 2, 3, 5):
        M = hermitian_embedding(n)
        H = random_hermitian(rng, n)
        got = (M @ hermitian_parameters(H)).reshape(2 * n, 2 * n)
        assert np.allclose(got, embed_matrix(H), atol=1e-14)
        # injective on the parametrization
        assert np.linalg.matrix_rank(M.toarray()) == n * n


def test_embedding_examples(rng):
    assert np.array_equal(embed_matrix(np.array([[2.0]])), np.diag([2.0, 2.0]))
    assert np.linalg.eigvalsh(embed_matrix(np.array([[-1.0]])))[0] < 0
    v = rng.normal(size=3) + 1j * rng.normal(size=3)
    E = embed_matrix(np.outer(v, v.conj()))
    w = np.linalg.eigvalsh(E)
    assert w[0] > -1e-12 and np.sum(w > 1e-9) == 2
    w = np.linalg.eigvalsh(embed_matrix(np.diag([1.0, -1.0])))
    assert w[0] < 0 < w[-1]


def test_embedding_preserves_min_eigen_sign(rng):
    agree = 0
    for _ in range(1000):
        H = random_hermitian(rng, 3)
        if rng.random() < 0.5:
            H = H @ H.conj().T  # PSD half of the time
        agree += np.sign(np.round(np.linalg.eigvalsh(H)[0], 10)) == np.sign(
            np.round(np.linalg.eigvalsh(embed_matrix(H))[0], 10))
    assert agree == 1000


def test_linexpr_algebra(rng):
    p = ConicProblem()
    X = p.var("X", (2, 3))
    x = rng.normal(size=p.nvars)
    Xv = x.reshape(2, 3)
    M, N = rng.normal(size=(4, 2)), rng.normal(size=(3, 5))
    assert np.allclose((M @ X @ N).value(x), M @ Xv @ N)
    assert np.allclose((X.T).value(x), Xv.T)
    assert np.allclose((2 * X - 1).value(x), 2 * Xv - 1)
    assert np.allclose(X[1, 2].value(x), Xv[1, 2])
    H = p.hermitian_var("H", 3)
    x = rng.normal(size=p.nvars)
    Hv = H.value(x)
    assert np.allclose(Hv, Hv.conj().T)
    Z = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.allclose((Z @ H @ Z.conj().T).value(x), Z @ Hv @ Z.conj().T)
    assert np.allclose(H.diag().value(x), np.diag(Hv))


@pytest.mark.parametrize("backend", BACKENDS)
def test_trivial_programs(backend):
    p = ConicProblem("lp")
    x = p.var("x", 1)
    p.ge(x - 1)
    p.minimize(x)
    assert solve(p, backend=backend).objective == pytest.approx(1.0, abs=1e-7)

    p = ConicProblem("psd")
    X = p.symmetric_var("X", 2)
    p.psd(X)
    p.eq(X[0, 0] - 1)
    p.minimize(X.trace())
    assert solve(p, backend=backend).objective == pytest.approx(1.0, abs=1e-7)

    p = ConicProblem("soc")
    t = p.var("t", 1)
    p.soc(t, Lin.constant([3.0, 4.0], p.nvars))
    p.minimize(t)
    assert solve(p, backend=backend).objective == pytest.approx(5.0, abs=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
def test_hermitian_psd_program(backend):
    # minimize Re H01 subject to H >= 0, diag(H) = 1 -> H01 = -1
    p = ConicProblem()
    H = p.hermitian_var("H", 2)
    p.hermitian_psd(H)
    p.eq(H.diag() - 1)
    p.minimize(H.re[0, 1])
    sol = solve(p, backend=backend)
    assert sol.objective == pytest.approx(-1.0, abs=1e-6)
    assert sol.accuracy["viol_psd"] < 1e-7


def test_failures_are_reported():
    p = ConicProblem()
    x = p.var("x", 1)
    p.ge(x - 1)
    p.le(x)
    p.minimize(x)
    with pytest.raises(SolverFailure) as err:
        solve(p)
    assert err.value.status in ("infeasible", "numerical_limit")
    p = ConicProblem()
    x = p.var("x", 1)
    p.minimize(x)
    with pytest.raises(SolverFailure):
        solve(p)
    with pytest.raises(SolverFailure):
        solve(ConicProblem(), backend="nope")


def test_env_selects_backend(monkeypatch):
    p = ConicProblem()
    x = p.var("x", 1)
    p.ge(x - 2)
    p.minimize(x)
    monkeypatch.setenv("SVROPF_SOLVER", "cvxpy")
    assert solve(p).backend == "cvxpy"
    monkeypatch.delenv("SVROPF_SOLVER")
    assert solve(p).backend == "clarabel"


def test_text_is_byte_stable():
    def build():
        p = ConicProblem("t")
        H = p.hermitian_var("H", 2)
        p.hermitian_psd(H, "blk")
        p.eq(H.diag() - 1, "diag")
        p.minimize(H.re[0, 1])
        return p.to_text()

    a, b = build(), build()
    assert a == b and "psd 4 blk" in a


def test_clin_products_reject_nonlinear():
    p = ConicProblem()
    a = p.complex_var("a", 2)
    with pytest.raises(TypeError):
        a * a
    assert isinstance(a * (1 + 2j), CLin)
