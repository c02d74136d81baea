"""Forward-mode truncated jets (order <= 2), batched over epsilon samples.

A :class:`Jet` carries, for each of ``m`` samples, a value, a gradient with
respect to ``n`` seeded variables and optionally the Hessian.  Quantities that
do not depend on the variables stay plain object arrays; every operation
accepts either form.
"""

from __future__ import annotations

import gmpy2
import numpy as np

from . import _mp


class Jet:
    __slots__ = ("val", "grad", "hess")

    def __init__(self, val: np.ndarray, grad: np.ndarray, hess: np.ndarray | None = None):
        self.val = val
        self.grad = grad
        self.hess = hess

    @property
    def order(self) -> int:
        return 2 if self.hess is not None else 1

    @classmethod
    def seed(cls, values: np.ndarray, index: int, n: int, order: int) -> "Jet":
        m = len(values)
        grad = _mp.zeros((m, n))
        grad[:, index] = _mp.ONE
        hess = _mp.zeros((m, n, n)) if order >= 2 else None
        return cls(values, grad, hess)


def value(a) -> np.ndarray:
    return a.val if isinstance(a, Jet) else a


def _outer(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    return g[:, :, None] * h[:, None, :]


def _col(a: np.ndarray) -> np.ndarray:
    return a[:, None]


def _mat(a: np.ndarray) -> np.ndarray:
    return a[:, None, None]


def unary(a, derivs):
    """Apply a scalar function given ``derivs(v, k) -> [f, f', ..., f^(k)]``."""
    if not isinstance(a, Jet):
        return derivs(a, 0)[0]
    d = derivs(a.val, a.order)
    grad = _col(d[1]) * a.grad
    hess = None
    if a.hess is not None:
        hess = _mat(d[1]) * a.hess + _mat(d[2]) * _outer(a.grad, a.grad)
    return Jet(d[0], grad, hess)


def add(a, b):
    if isinstance(a, Jet) and isinstance(b, Jet):
        hess = a.hess + b.hess if a.hess is not None else None
        return Jet(a.val + b.val, a.grad + b.grad, hess)
    if isinstance(a, Jet):
        return Jet(a.val + b, a.grad, a.hess)
    if isinstance(b, Jet):
        return Jet(a + b.val, b.grad, b.hess)
    return a + b


def neg(a):
    if isinstance(a, Jet):
        return Jet(-a.val, -a.grad, -a.hess if a.hess is not None else None)
    return -a


def sub(a, b):
    if isinstance(a, Jet) and isinstance(b, Jet):
        hess = a.hess - b.hess if a.hess is not None else None
        return Jet(a.val - b.val, a.grad - b.grad, hess)
    if isinstance(a, Jet):
        return Jet(a.val - b, a.grad, a.hess)
    if isinstance(b, Jet):
        return Jet(a - b.val, -b.grad, -b.hess if b.hess is not None else None)
    return a - b


def _scale(c: np.ndarray, a: Jet) -> Jet:
    return Jet(c * a.val, _col(c) * a.grad, _mat(c) * a.hess if a.hess is not None else None)


def mul(a, b):
    if isinstance(a, Jet) and isinstance(b, Jet):
        val = a.val * b.val
        grad = _col(a.val) * b.grad + _col(b.val) * a.grad
        hess = None
        if a.hess is not None:
            hess = (
                _mat(a.val) * b.hess
                + _mat(b.val) * a.hess
                + _outer(a.grad, b.grad)
                + _outer(b.grad, a.grad)
            )
        return Jet(val, grad, hess)
    if isinstance(a, Jet):
        return _scale(b, a)
    if isinstance(b, Jet):
        return _scale(a, b)
    return a * b


def div(a, b):
    if not isinstance(b, Jet):
        if isinstance(a, Jet):
            return Jet(a.val / b, a.grad / _col(b), a.hess / _mat(b) if a.hess is not None else None)
        return a / b
    q = value(a) / b.val
    ga = a.grad if isinstance(a, Jet) else _mp.zeros(b.grad.shape)
    grad = (ga - _col(q) * b.grad) / _col(b.val)
    hess = None
    if b.hess is not None:
        ha = a.hess if isinstance(a, Jet) else _mp.zeros(b.hess.shape)
        hess = (ha - _mat(q) * b.hess - _outer(grad, b.grad) - _outer(b.grad, grad)) / _mat(b.val)
    return Jet(q, grad, hess)


def _is_int(p) -> bool:
    return bool(gmpy2.is_integer(p))


def _pow_scalar_derivs(v, p, k):
    out = [v**p]
    if k >= 1:
        out.append(_mp.ZERO if p == 0 else p * v ** (p - 1))
    if k >= 2:
        out.append(_mp.ZERO if (p == 0 or p == 1) else p * (p - 1) * v ** (p - 2))
    return out


def power_const(a, p: np.ndarray):
    """``a ** p`` where ``p`` does not depend on the variables."""

    def derivs(v, k):
        if k == 0:
            return [v**p]
        rows = [_pow_scalar_derivs(vi, pi, k) for vi, pi in zip(v, p)]
        cols = []
        for j in range(k + 1):
            col = np.empty(len(rows), dtype=object)
            col[:] = [r[j] for r in rows]
            cols.append(col)
        return cols

    return unary(a, derivs)


def power(a, b):
    if not isinstance(b, Jet):
        return power_const(a, b)
    return exp(mul(b, log(a)))


def _d_sin(v, k):
    s = _mp.sin(v)
    if k == 0:
        return [s]
    c = _mp.cos(v)
    return [s, c, -s][: k + 1]


def _d_cos(v, k):
    c = _mp.cos(v)
    if k == 0:
        return [c]
    s = _mp.sin(v)
    return [c, -s, -c][: k + 1]


def _d_exp(v, k):
    e = _mp.exp(v)
    return [e] * (k + 1)


def _d_log(v, k):
    out = [_mp.log(v)]
    if k >= 1:
        out.append(_mp.ONE / v)
    if k >= 2:
        out.append(-_mp.ONE / (v * v))
    return out


def _d_sqrt(v, k):
    s = _mp.sqrt(v)
    out = [s]
    if k >= 1:
        out.append(_mp.ONE / (2 * s))
    if k >= 2:
        out.append(-_mp.ONE / (4 * s * v))
    return out


def _sign(v):
    out = np.empty(len(v), dtype=object)
    out[:] = [_mp.ONE if x > 0 else (-_mp.ONE if x < 0 else _mp.ZERO) for x in v]
    return out


def _d_abs(v, k):
    out = [np.abs(v)]
    if k >= 1:
        out.append(_sign(v))
    if k >= 2:
        out.append(_mp.zeros(len(v)))
    return out


def _d_ramp(v, k):
    out = [np.maximum(v, _mp.ZERO)]
    if k >= 1:
        h = np.empty(len(v), dtype=object)
        h[:] = [_mp.ONE if x > 0 else _mp.ZERO for x in v]
        out.append(h)
    if k >= 2:
        out.append(_mp.zeros(len(v)))
    return out


def sin(a):
    return unary(a, _d_sin)


def cos(a):
    return unary(a, _d_cos)


def exp(a):
    return unary(a, _d_exp)


def log(a):
    return unary(a, _d_log)


def sqrt(a):
    return unary(a, _d_sqrt)


def absolute(a):
    return unary(a, _d_abs)


def ramp(a):
    return unary(a, _d_ramp)


def select(mask: np.ndarray, a, b):
    """Pick ``a`` where ``mask`` holds, else ``b``, row by row."""
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.where(mask, a, b).astype(object)
    template = a if isinstance(a, Jet) else b
    m, n = template.grad.shape
    order = template.order
    ja = a if isinstance(a, Jet) else Jet(a, _mp.zeros((m, n)), _mp.zeros((m, n, n)) if order == 2 else None)
    jb = b if isinstance(b, Jet) else Jet(b, _mp.zeros((m, n)), _mp.zeros((m, n, n)) if order == 2 else None)
    val = np.where(mask, ja.val, jb.val).astype(object)
    grad = np.where(mask[:, None], ja.grad, jb.grad).astype(object)
    hess = None
    if order == 2:
        hess = np.where(mask[:, None, None], ja.hess, jb.hess).astype(object)
    return Jet(val, grad, hess)


def minimum(a, b):
    va, vb = value(a), value(b)
    mask = np.array([x <= y for x, y in zip(va, vb)], dtype=bool)
    return select(mask, a, b)


def maximum(a, b):
    va, vb = value(a), value(b)
    mask = np.array([x >= y for x, y in zip(va, vb)], dtype=bool)
    return select(mask, a, b)
