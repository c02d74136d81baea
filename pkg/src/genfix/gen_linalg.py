"""Vectors and matrices over the generalized ring, computed per eps sample."""

from __future__ import annotations

from typing import Callable, Sequence

import gmpy2
import numpy as np

from . import _mp
from .errors import DimensionMismatch, NotInvertibleInRing
from .gauge_ring import DEFAULT_GRID, EpsGrid, Gauge, GenNum, _coerce, _eps_array, is_invertible

JACOBI_TOL = 1e-12
JACOBI_SWEEPS = 60


class _BlockCache:
    """Memoized per-eps net returning an array of shape ``(m, *shape)``."""

    def __init__(self, net: Callable[[np.ndarray], np.ndarray], shape: tuple):
        self._net = net
        self.shape = shape
        self._cache: dict[float, np.ndarray] = {}

    def __call__(self, eps) -> np.ndarray:
        eps = _eps_array(eps)
        keys = eps.tolist()
        missing = [e for e in dict.fromkeys(keys) if e not in self._cache]
        if missing:
            _mp.ensure_context()
            block = self._net(np.asarray(missing, dtype=float))
            for i, e in enumerate(missing):
                self._cache.setdefault(e, block[i])
        out = np.empty((len(keys),) + self.shape, dtype=object)
        for i, e in enumerate(keys):
            out[i] = self._cache[e]
        return out


# --------------------------------------------------------------------------
# vectors


class GenVec:
    """A point of the generalized Euclidean space: ``dim`` GenNum components."""

    def __init__(self, components: Sequence[GenNum]):
        comps = list(components)
        if not comps:
            raise DimensionMismatch("a GenVec needs at least one component")
        g = comps[0].gauge
        self.components = [_coerce(g, c) for c in comps]
        self.gauge: Gauge = g
        self._block: _BlockCache | None = None

    @classmethod
    def from_block(cls, gauge: Gauge, net: Callable[[np.ndarray], np.ndarray], dim: int, label: str = "v") -> "GenVec":
        """Vector whose components share one net returning ``(m, dim)`` arrays."""
        block = _BlockCache(net, (dim,))
        comps = [GenNum(gauge, lambda e, j=j: block(e)[:, j], label=f"{label}[{j + 1}]") for j in range(dim)]
        v = cls(comps)
        v._block = block
        return v

    @classmethod
    def const(cls, gauge: Gauge, values: Sequence) -> "GenVec":
        return cls([GenNum.const(gauge, v) for v in values])

    @property
    def dim(self) -> int:
        return len(self.components)

    def __len__(self):
        return self.dim

    def __getitem__(self, i) -> GenNum:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __repr__(self):
        return f"GenVec({[c.label for c in self.components]})"

    def values(self, eps) -> np.ndarray:
        """Samples as an ``(m, dim)`` object array."""
        if self._block is not None:
            return self._block(eps)
        cols = [c.values(eps) for c in self.components]
        out = np.empty((len(cols[0]), self.dim), dtype=object)
        for j, col in enumerate(cols):
            out[:, j] = col
        return out

    def _check(self, other: "GenVec"):
        if not isinstance(other, GenVec):
            raise TypeError("expected a GenVec")
        if other.dim != self.dim:
            raise DimensionMismatch(f"dimensions {self.dim} and {other.dim} differ")

    def __add__(self, other):
        self._check(other)
        return GenVec([a + b for a, b in zip(self, other)])

    def __sub__(self, other):
        self._check(other)
        return GenVec([a - b for a, b in zip(self, other)])

    def __neg__(self):
        return GenVec([-a for a in self])

    def scale(self, s) -> "GenVec":
        return GenVec([a * s for a in self])

    def __mul__(self, s):
        return self.scale(s)

    __rmul__ = __mul__


def vec_norm(v: GenVec) -> GenNum:
    """Euclidean norm per eps."""
    if v.dim == 1:
        return abs(v[0])

    def net(e):
        vals = v.values(e)
        out = np.empty(len(vals), dtype=object)
        out[:] = [gmpy2.sqrt(sum(x * x for x in row)) for row in vals]
        return out

    return GenNum(v.gauge, net, label=f"|{v!r}|")


# --------------------------------------------------------------------------
# matrices


class GenMat:
    """A ``rows x cols`` matrix of GenNum, optionally backed by a shared block net."""

    def __init__(self, rows: int, cols: int, entries: Sequence[GenNum]):
        entries = list(entries)
        if len(entries) != rows * cols:
            raise DimensionMismatch(f"{rows}x{cols} matrix needs {rows * cols} entries, got {len(entries)}")
        g = entries[0].gauge
        self.rows = rows
        self.cols = cols
        self.entries = [_coerce(g, x) for x in entries]
        self.gauge: Gauge = g
        self._block: _BlockCache | None = None

    @classmethod
    def from_block(cls, gauge: Gauge, net: Callable[[np.ndarray], np.ndarray], rows: int, cols: int, label: str = "A"):
        block = _BlockCache(net, (rows, cols))
        entries = [
            GenNum(gauge, lambda e, i=i, j=j: block(e)[:, i, j], label=f"{label}[{i + 1},{j + 1}]")
            for i in range(rows)
            for j in range(cols)
        ]
        A = cls(rows, cols, entries)
        A._block = block
        return A

    @classmethod
    def from_rows(cls, gauge: Gauge, rows: Sequence[Sequence]) -> "GenMat":
        r = len(rows)
        c = len(rows[0])
        if any(len(row) != c for row in rows):
            raise DimensionMismatch("ragged matrix rows")
        flat = [x if isinstance(x, GenNum) else GenNum.const(gauge, x) for row in rows for x in row]
        return cls(r, c, flat)

    @classmethod
    def identity(cls, gauge: Gauge, n: int) -> "GenMat":
        return cls.from_rows(gauge, [[1 if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def diag(cls, gauge: Gauge, values: Sequence) -> "GenMat":
        n = len(values)
        zero = GenNum.const(gauge, 0)
        return cls.from_rows(gauge, [[values[i] if i == j else zero for j in range(n)] for i in range(n)])

    def __getitem__(self, ij) -> GenNum:
        i, j = ij
        return self.entries[i * self.cols + j]

    def __repr__(self):
        return f"GenMat({self.rows}x{self.cols})"

    @property
    def square(self) -> bool:
        return self.rows == self.cols

    def values(self, eps) -> np.ndarray:
        """Samples as an ``(m, rows, cols)`` object array."""
        if self._block is not None:
            return self._block(eps)
        cols = [x.values(eps) for x in self.entries]
        out = np.empty((len(cols[0]), self.rows, self.cols), dtype=object)
        for k, col in enumerate(cols):
            out[:, k // self.cols, k % self.cols] = col
        return out


def mat_apply(A: GenMat, v: GenVec) -> GenVec:
    if A.cols != v.dim:
        raise DimensionMismatch(f"cannot apply a {A.rows}x{A.cols} matrix to a vector of dim {v.dim}")

    def net(e):
        a = A.values(e)
        x = v.values(e)
        return np.einsum("mij,mj->mi", a, x)

    return GenVec.from_block(A.gauge, net, A.rows, label="Av")


def mat_mul(A: GenMat, B: GenMat) -> GenMat:
    if A.cols != B.rows:
        raise DimensionMismatch(f"cannot multiply {A.rows}x{A.cols} by {B.rows}x{B.cols}")

    def net(e):
        return np.einsum("mik,mkj->mij", A.values(e), B.values(e))

    return GenMat.from_block(A.gauge, net, A.rows, B.cols, label="AB")


# -- per-sample kernels on mpfr matrices ------------------------------------


def _pivot_floor(a: np.ndarray):
    scale = max((abs(x) for x in a.ravel()), default=_mp.ZERO)
    return scale * _mp.mp(2) ** (32 - _mp.precision())


def _lu(a: np.ndarray):
    """Elimination with partial pivoting; returns (u, perm, sign, pivots)."""
    n = a.shape[0]
    u = a.copy()
    perm = list(range(n))
    sign = 1
    for k in range(n):
        p = max(range(k, n), key=lambda i: abs(u[i, k]))
        if p != k:
            u[[k, p]] = u[[p, k]]
            perm[k], perm[p] = perm[p], perm[k]
            sign = -sign
        piv = u[k, k]
        if piv == 0:
            return u, perm, sign, k
        for i in range(k + 1, n):
            f = u[i, k] / piv
            u[i, k] = _mp.ZERO
            for j in range(k + 1, n):
                u[i, j] = u[i, j] - f * u[k, j]
            u[i, k] = f  # keep the multiplier in the strict lower part
    return u, perm, sign, None


def det_sample(a: np.ndarray):
    n = a.shape[0]
    if n == 1:
        return a[0, 0]
    if n == 2:
        return a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    u, _, sign, singular = _lu(a)
    if singular is not None:
        return _mp.ZERO
    d = _mp.ONE * sign
    for k in range(n):
        d = d * u[k, k]
    return d


def inverse_sample(a: np.ndarray, eps: float | None = None) -> np.ndarray:
    """Gauss-Jordan inverse of one mpfr matrix with partial pivoting."""
    n = a.shape[0]
    floor = _pivot_floor(a)
    aug = np.empty((n, 2 * n), dtype=object)
    aug[:, :n] = a
    aug[:, n:] = _mp.ZERO
    for i in range(n):
        aug[i, n + i] = _mp.ONE
    for k in range(n):
        p = max(range(k, n), key=lambda i: abs(aug[i, k]))
        piv = aug[p, k]
        if piv == 0 or abs(piv) <= floor:
            raise NotInvertibleInRing(f"singular pivot at eps={eps}", eps=eps, pivot=_mp.to_float(piv))
        if p != k:
            aug[[k, p]] = aug[[p, k]]
        aug[k] = aug[k] / piv
        for i in range(n):
            if i != k and aug[i, k] != 0:
                aug[i] = aug[i] - aug[i, k] * aug[k]
    return aug[:, n:]


def _sym_max_eig(s: np.ndarray):
    """Largest eigenvalue of a symmetric positive semidefinite mpfr matrix."""
    n = s.shape[0]
    if n == 1:
        return s[0, 0]
    if n == 2:
        t = s[0, 0] + s[1, 1]
        disc = (s[0, 0] - s[1, 1]) ** 2 + 4 * s[0, 1] * s[1, 0]
        return (t + gmpy2.sqrt(max(disc, _mp.ZERO))) / 2
    a = s.copy()
    scale = max((abs(x) for x in a.ravel()), default=_mp.ZERO)
    if scale == 0:
        return _mp.ZERO
    tol = _mp.mp(JACOBI_TOL) ** 2 * scale
    for _ in range(JACOBI_SWEEPS):
        off = sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j)
        if gmpy2.sqrt(off) <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = (1 if theta >= 0 else -1) / (abs(theta) + gmpy2.sqrt(theta * theta + 1))
                c = 1 / gmpy2.sqrt(t * t + 1)
                sn = t * c
                for k in range(n):
                    akp, akq = a[k, p], a[k, q]
                    a[k, p] = c * akp - sn * akq
                    a[k, q] = sn * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p, k], a[q, k]
                    a[p, k] = c * apk - sn * aqk
                    a[q, k] = sn * apk + c * aqk
    return max(a[i, i] for i in range(n))


def spectral_norm_sample(a: np.ndarray):
    r, c = a.shape
    if r == 1 or c == 1:
        return gmpy2.sqrt(sum(x * x for x in a.ravel()))
    s = a.T.dot(a) if c <= r else a.dot(a.T)
    return gmpy2.sqrt(max(_sym_max_eig(s), _mp.ZERO))


# -- generalized operations --------------------------------------------------


def det(A: GenMat) -> GenNum:
    if not A.square:
        raise DimensionMismatch("determinant of a non-square matrix")

    def net(e):
        vals = A.values(e)
        out = np.empty(len(vals), dtype=object)
        out[:] = [det_sample(a) for a in vals]
        return out

    return GenNum(A.gauge, net, label="det")


def mat_inverse(A: GenMat, grid: EpsGrid = DEFAULT_GRID) -> GenMat:
    """Per-eps inverse after certifying ``|det A|`` is invertible in the ring."""
    if not A.square:
        raise DimensionMismatch("only square matrices can be inverted")
    dec = is_invertible(det(A), grid)
    if not dec:
        raise NotInvertibleInRing(
            f"|det| fails the strict-positivity certificate ({dec.verdict.value}) at eps={dec.eps}",
            eps=dec.eps,
            m=dec.order,
        )

    def net(e):
        vals = A.values(e)
        out = np.empty(vals.shape, dtype=object)
        for i, (x, a) in enumerate(zip(e, vals)):
            out[i] = inverse_sample(a, float(x))
        return out

    return GenMat.from_block(A.gauge, net, A.rows, A.cols, label="inv")


def operator_norm(A: GenMat) -> GenNum:
    """Spectral norm per eps."""

    def net(e):
        vals = A.values(e)
        out = np.empty(len(vals), dtype=object)
        out[:] = [spectral_norm_sample(a) for a in vals]
        return out

    return GenNum(A.gauge, net, label="||A||")


def bilinear_norm(H: Sequence[GenMat]) -> GenNum:
    """Upper bound ``sqrt(sum_j ||H_j||^2)`` for the norm of a stacked bilinear form."""
    if len(H) == 1:
        return operator_norm(H[0])
    norms = [operator_norm(h) for h in H]

    def net(e):
        cols = [n.values(e) for n in norms]
        out = np.empty(len(cols[0]), dtype=object)
        out[:] = [gmpy2.sqrt(sum(c[i] ** 2 for c in cols)) for i in range(len(cols[0]))]
        return out

    return GenNum(H[0].gauge, net, label="||H||")
