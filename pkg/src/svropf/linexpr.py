"""Sparse affine expressions over a growing real decision vector.

``Lin`` is an array-shaped real expression ``const + coef @ x``; ``CLin`` pairs
two of them as real and imaginary parts. Only operations with constant
operands are supported, which is all a conic model builder needs.
"""
from __future__ import annotations

import numbers

import numpy as np
import scipy.sparse as sp


def _pad(m: sp.csr_matrix, n: int) -> sp.csr_matrix:
    if m.shape[1] == n:
        return m
    return sp.csr_matrix((m.data, m.indices, m.indptr), shape=(m.shape[0], n))


class Lin:
    """Real affine expression with an array shape (1-D or 2-D)."""

    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, coef, const):
        const = np.asarray(const, dtype=float)
        self.const = const
        self.coef = sp.csr_matrix(coef)
        if self.coef.shape[0] != const.size:
            raise ValueError(f"coefficient rows {self.coef.shape[0]} != size {const.size}")

    # ------------------------------------------------------------ construction
    @classmethod
    def constant(cls, value, nvars: int = 0) -> "Lin":
        value = np.asarray(value, dtype=float)
        return cls(sp.csr_matrix((value.size, nvars)), value)

    @classmethod
    def from_indices(cls, idx, shape, nvars: int) -> "Lin":
        """Entries equal to single variables; index -1 marks a constant zero."""
        idx = np.asarray(idx).reshape(-1)
        rows = np.flatnonzero(idx >= 0)
        coef = sp.csr_matrix((np.ones(rows.size), (rows, idx[rows])), shape=(idx.size, nvars))
        return cls(coef, np.zeros(shape))

    # ------------------------------------------------------------ basics
    @property
    def shape(self):
        return self.const.shape

    @property
    def size(self):
        return self.const.size

    @property
    def nvars(self):
        return self.coef.shape[1]

    def __repr__(self):
        return f"Lin(shape={self.shape}, nnz={self.coef.nnz})"

    def _lift(self, other):
        if isinstance(other, Lin):
            return other
        return Lin.constant(np.broadcast_to(np.asarray(other, float), self.shape), self.nvars)

    def __add__(self, other):
        other = self._lift(other)
        if other.shape != self.shape:
            if other.size == 1:
                other = other.broadcast(self.shape)
            elif self.size == 1:
                return self.broadcast(other.shape) + other
            else:
                raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        n = max(self.nvars, other.nvars)
        return Lin(_pad(self.coef, n) + _pad(other.coef, n), self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Lin(-self.coef, -self.const)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        """Scalar or elementwise multiplication by a constant."""
        if isinstance(other, Lin):
            raise TypeError("product of two affine expressions is not affine")
        if isinstance(other, numbers.Real):
            return Lin(self.coef * float(other), self.const * float(other))
        w = np.broadcast_to(np.asarray(other, float), self.shape).reshape(-1)
        return Lin(sp.diags(w) @ self.coef, self.const * w.reshape(self.shape))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / other)

    def broadcast(self, shape) -> "Lin":
        rows = np.zeros(int(np.prod(shape)), dtype=int)
        return Lin(self.coef[rows], np.full(shape, self.const.reshape(-1)[0]))

    # ------------------------------------------------------------ reshaping
    def _take(self, rows, shape) -> "Lin":
        rows = np.asarray(rows, dtype=int).reshape(-1)
        return Lin(self.coef[rows], self.const.reshape(-1)[rows].reshape(shape))

    def __getitem__(self, key):
        pos = np.arange(self.size).reshape(self.shape)[key]
        pos = np.asarray(pos)
        return self._take(pos, pos.shape)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Lin(self.coef, self.const.reshape(shape))

    def flatten(self):
        return self.reshape(self.size)

    @property
    def T(self):
        if len(self.shape) < 2:
            return self
        perm = np.arange(self.size).reshape(self.shape).T
        return self._take(perm, perm.shape)

    def diag(self):
        r, c = self.shape
        k = min(r, c)
        return self._take(np.arange(k) * c + np.arange(k), (k,))

    def sum(self):
        ones = sp.csr_matrix(np.ones((1, self.size)))
        return Lin(ones @ self.coef, np.array([self.const.sum()]))

    def trace(self):
        return self.diag().sum()

    # ------------------------------------------------------------ matmul with constants
    def __matmul__(self, other):
        if isinstance(other, Lin):
            raise TypeError("product of two affine expressions is not affine")
        N = np.asarray(other, float)
        if len(self.shape) == 1:
            return (self.reshape(1, self.size) @ N).reshape(N.shape[1:] if N.ndim > 1 else (1,))
        r, c = self.shape
        if N.ndim == 1:
            return (self @ N.reshape(c, 1)).reshape(r)
        q = N.shape[1]
        K = sp.kron(sp.identity(r, format="csr"), sp.csr_matrix(N.T), format="csr")
        return Lin(K @ self.coef, self.const @ N)

    def __rmatmul__(self, other):
        M = np.asarray(other, float)
        if len(self.shape) == 1:
            return (M @ self.reshape(self.size, 1)).reshape(M.shape[0])
        r, c = self.shape
        K = sp.kron(sp.csr_matrix(M), sp.identity(c, format="csr"), format="csr")
        return Lin(K @ self.coef, M @ self.const)

    # ------------------------------------------------------------ evaluation
    def value(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        n = self.nvars
        return (self.coef @ x[:n]).reshape(self.shape) + self.const


def vstack(items) -> Lin:
    items = [it if it.const.ndim == 2 else it.reshape(1, it.size) for it in items]
    n = max(it.nvars for it in items)
    coef = sp.vstack([_pad(it.coef, n) for it in items], format="csr")
    return Lin(coef, np.vstack([it.const for it in items]))


def hstack(items) -> Lin:
    return vstack([it.T for it in items]).T


def concat(items) -> Lin:
    """Join the flattened entries of several expressions into one vector."""
    n = max(it.nvars for it in items)
    coef = sp.vstack([_pad(it.coef, n) for it in items], format="csr")
    return Lin(coef, np.concatenate([it.const.reshape(-1) for it in items]))


def bmat(blocks) -> Lin:
    return vstack([hstack(row) for row in blocks])


class CLin:
    """Complex affine expression ``re + j*im``."""

    __array_ufunc__ = None

    def __init__(self, re: Lin, im: Lin):
        if re.shape != im.shape:
            raise ValueError("real and imaginary parts differ in shape")
        self.re, self.im = re, im

    @classmethod
    def constant(cls, value, nvars: int = 0) -> "CLin":
        value = np.asarray(value, complex)
        return cls(Lin.constant(value.real, nvars), Lin.constant(value.imag, nvars))

    @property
    def shape(self):
        return self.re.shape

    def __repr__(self):
        return f"CLin(shape={self.shape})"

    def _lift(self, other):
        if isinstance(other, CLin):
            return other
        if isinstance(other, Lin):
            return CLin(other, other * 0.0)
        return CLin.constant(np.broadcast_to(np.asarray(other, complex), self.shape))

    def __add__(self, other):
        other = self._lift(other)
        return CLin(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __neg__(self):
        return CLin(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (Lin, CLin)):
            raise TypeError("product of two affine expressions is not affine")
        a = np.asarray(other, complex)
        ar, ai = a.real, a.imag
        return CLin(self.re * ar - self.im * ai, self.re * ai + self.im * ar)

    __rmul__ = __mul__

    def __matmul__(self, other):
        N = np.asarray(other, complex)
        return CLin(self.re @ N.real - self.im @ N.imag, self.re @ N.imag + self.im @ N.real)

    def __rmatmul__(self, other):
        M = np.asarray(other, complex)
        return CLin(M.real @ self.re - M.imag @ self.im, M.real @ self.im + M.imag @ self.re)

    def __getitem__(self, key):
        return CLin(self.re[key], self.im[key])

    @property
    def T(self):
        return CLin(self.re.T, self.im.T)

    @property
    def H(self):
        return CLin(self.re.T, -self.im.T)

    def conj(self):
        return CLin(self.re, -self.im)

    def diag(self):
        return CLin(self.re.diag(), self.im.diag())

    def sum(self):
        return CLin(self.re.sum(), self.im.sum())

    def trace(self):
        return CLin(self.re.trace(), self.im.trace())

    def reshape(self, *shape):
        return CLin(self.re.reshape(*shape), self.im.reshape(*shape))

    def value(self, x) -> np.ndarray:
        return self.re.value(x) + 1j * self.im.value(x)


def cbmat(blocks) -> CLin:
    return CLin(bmat([[b.re for b in row] for row in blocks]), bmat([[b.im for b in row] for row in blocks]))


def embed_hermitian(H: CLin) -> Lin:
    """Real symmetric ``[[Re H, -Im H], [Im H, Re H]]`` of a Hermitian expression."""
    return bmat([[H.re, -H.im], [H.im, H.re]])
