"""Generalized smooth functions: nets of smooth maps evaluated per eps.

A :class:`GenFunc` owns a *kernel* ``kernel(eps, rho, params, xs) -> ys`` that
maps a batch of ``m`` samples (``xs`` is a list of ``n`` object arrays or
jets, one per input coordinate) to a list of ``d`` outputs.  The same kernel
serves plain evaluation and first/second differentials, because the jet
operations accept both forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import gmpy2
import numpy as np

from . import _mp, expr, jets
from .errors import (
    DimensionMismatch,
    DomainViolation,
    MissingParam,
    ModerationFailure,
    NotInvertible,
    UnboundName,
    UnknownBuiltin,
)
from .gauge_ring import (
    DEFAULT_GRID,
    M_MAX,
    EpsGrid,
    Gauge,
    GenNum,
    is_invertible,
    is_negligible,
    make_gauge,
)
from .gen_linalg import GenMat, GenVec, mat_apply, spectral_norm_sample, vec_norm

Kernel = Callable[[np.ndarray, np.ndarray, dict, list], list]
Domain = Callable[[np.ndarray, np.ndarray], np.ndarray]

BUILTINS = ("example1", "example2", "ramp_mollified")


class GenFunc:
    """A generalized smooth function ``R^n -> R^d`` given by a per-eps kernel."""

    def __init__(
        self,
        gauge: Gauge,
        n: int,
        d: int,
        kernel: Kernel,
        env: expr.ParamEnv | None = None,
        domain: Domain | None = None,
        label: str = "f",
    ):
        if n < 1 or d < 1:
            raise DimensionMismatch("dimensions must be positive")
        self.gauge = gauge
        self.n = n
        self.d = d
        self.kernel = kernel
        self.env = env if env is not None else expr.ParamEnv(gauge, dim=n)
        self.domain = domain
        self.label = label

    @property
    def dom_dim(self) -> int:
        return self.n

    @property
    def cod_dim(self) -> int:
        return self.d

    def __repr__(self):
        return f"GenFunc({self.label}, {self.n}->{self.d})"

    # -- per-eps application --------------------------------------------------

    def apply(self, eps: np.ndarray, xs: list) -> list:
        """Run the kernel on a batch; ``eps[i]`` labels sample ``i``."""
        eps = np.asarray(eps, dtype=float)
        if len(xs) != self.n:
            raise DimensionMismatch(f"{self.label} takes {self.n} inputs, got {len(xs)}")
        if self.domain is not None:
            pts = np.empty((len(eps), self.n), dtype=object)
            for j, x in enumerate(xs):
                pts[:, j] = jets.value(x)
            ok = np.asarray(self.domain(eps, pts), dtype=bool)
            if not ok.all():
                i = int(np.flatnonzero(~ok)[0])
                raise DomainViolation(f"{self.label} is undefined at eps={float(eps[i])!r}", eps=float(eps[i]))
        rho = self.gauge.rho(eps)
        params = {name: self.env[name].values(eps) for name in self.env.names()}
        ys = self.kernel(eps, rho, params, list(xs))
        if len(ys) != self.d:
            raise DimensionMismatch(f"{self.label} returned {len(ys)} outputs, expected {self.d}")
        m = len(eps)
        return [_broadcast(y, m) for y in ys]

    def jet_eval(self, eps: np.ndarray, pts: np.ndarray, order: int = 0):
        """Values ``(m, d)``, Jacobians ``(m, d, n)`` and Hessians ``(m, d, n, n)``.

        Derivatives are ``None`` when ``order`` does not ask for them.
        """
        eps = np.asarray(eps, dtype=float)
        m = len(eps)
        pts = np.asarray(pts, dtype=object).reshape(m, self.n)
        if order == 0:
            xs = [pts[:, j].copy() for j in range(self.n)]
        else:
            xs = [jets.Jet.seed(pts[:, j].copy(), j, self.n, order) for j in range(self.n)]
        ys = self.apply(eps, xs)
        val = np.empty((m, self.d), dtype=object)
        grad = _mp.zeros((m, self.d, self.n)) if order >= 1 else None
        hess = _mp.zeros((m, self.d, self.n, self.n)) if order >= 2 else None
        for i, y in enumerate(ys):
            if isinstance(y, jets.Jet):
                val[:, i] = y.val
                if grad is not None:
                    grad[:, i, :] = y.grad
                if hess is not None:
                    hess[:, i] = y.hess
            else:
                val[:, i] = y
        return val, grad, hess

    def at(self, eps: float, point: Sequence) -> np.ndarray:
        """``f_eps(point)`` for a single real point."""
        val, _, _ = self.jet_eval(np.array([eps]), np.array([[_mp.mp(p) for p in point]], dtype=object))
        return val[0]

    def __call__(self, x: GenVec, certify: bool = False, grid: EpsGrid = DEFAULT_GRID) -> GenVec:
        return evaluate(self, x, certify=certify, grid=grid)


def _broadcast(y, m: int):
    if isinstance(y, jets.Jet):
        return y
    if isinstance(y, np.ndarray) and y.shape == (m,):
        return y
    return _mp.full(m, y)


def _as_vec(x, gauge: Gauge) -> GenVec:
    if isinstance(x, GenVec):
        return x
    if isinstance(x, GenNum):
        return GenVec([x])
    if isinstance(x, (list, tuple)):
        return GenVec([c if isinstance(c, GenNum) else GenNum.const(gauge, c) for c in x])
    return GenVec([GenNum.const(gauge, x)])


# --------------------------------------------------------------------------
# moderateness


def check_moderate(values: np.ndarray, rho: np.ndarray, eps: np.ndarray, what: str = "value", n_max: int = M_MAX) -> int:
    """Least N with ``|y| <= rho**-N`` on every sample; raises ModerationFailure."""
    flat = values.reshape(len(eps), -1)
    for e, row in zip(eps, flat):
        if not all(_mp.is_finite(v) for v in row):
            raise ModerationFailure(f"{what} is not finite at eps={float(e)!r}", eps=float(e))
    for N in range(0, n_max + 1):
        bad = [i for i, (r, row) in enumerate(zip(rho, flat)) if any(abs(v) > r ** (-N) for v in row)]
        if not bad:
            return N
    i = bad[0]
    raise ModerationFailure(f"{what} is not moderate (exceeds rho^-{n_max}) at eps={float(eps[i])!r}", eps=float(eps[i]), N=n_max)


def _certify(f: GenFunc, block_net, grid: EpsGrid, what: str):
    tail = grid.tail
    vals = block_net(tail)
    check_moderate(vals, f.gauge.rho(tail), tail, what)


# --------------------------------------------------------------------------
# evaluation and differentials


def evaluate(f: GenFunc, x, certify: bool = False, grid: EpsGrid = DEFAULT_GRID) -> GenVec:
    """``f([x_eps]) = [f_eps(x_eps)]``."""
    x = _as_vec(x, f.gauge)
    if x.dim != f.n:
        raise DimensionMismatch(f"{f.label} expects dim {f.n}, got {x.dim}")

    def net(e):
        return f.jet_eval(e, x.values(e), 0)[0]

    out = GenVec.from_block(f.gauge, net, f.d, label=f.label)
    if certify:
        _certify(f, out.values, grid, f"{f.label}(x)")
    return out


def differential(f: GenFunc, x, order: int = 1, certify: bool = False, grid: EpsGrid = DEFAULT_GRID):
    """Order 1: the ``d x n`` Jacobian.  Order 2: a list of ``d`` Hessians ``n x n``."""
    x = _as_vec(x, f.gauge)
    if x.dim != f.n:
        raise DimensionMismatch(f"{f.label} expects dim {f.n}, got {x.dim}")
    if order == 1:

        def net(e):
            return f.jet_eval(e, x.values(e), 1)[1]

        J = GenMat.from_block(f.gauge, net, f.d, f.n, label=f"d{f.label}")
        if certify:
            _certify(f, J.values, grid, f"d{f.label}(x)")
        return J
    if order == 2:
        cache = {}

        def full(e):
            key = tuple(np.asarray(e, dtype=float).tolist())
            if key not in cache:
                cache.clear()
                cache[key] = f.jet_eval(e, x.values(e), 2)[2]
            return cache[key]

        Hs = [
            GenMat.from_block(f.gauge, lambda e, i=i: full(e)[:, i], f.n, f.n, label=f"d2{f.label}[{i + 1}]")
            for i in range(f.d)
        ]
        if certify:
            for H in Hs:
                _certify(f, H.values, grid, f"d2{f.label}(x)")
        return Hs
    raise ValueError("only first and second differentials are available")


def incremental_ratio(f: GenFunc, x, v, h, grid: EpsGrid = DEFAULT_GRID) -> GenVec:
    """``r(x, h)`` with ``f(x + h v) = f(x) + h r(x, h)``."""
    x = _as_vec(x, f.gauge)
    v = _as_vec(v, f.gauge)
    h = h if isinstance(h, GenNum) else GenNum.const(f.gauge, h)
    if is_invertible(h, grid):
        fx = evaluate(f, x)
        fxh = evaluate(f, x + v.scale(h))
        return GenVec([a.div_unchecked(h) for a in (fxh - fx)])
    if is_negligible(h, grid):
        return mat_apply(differential(f, x, 1), v)
    raise NotInvertible(f"increment {h.label} is neither invertible nor negligible on the grid")


@dataclass(frozen=True)
class TaylorBound:
    order: int
    remainder_bound: GenNum
    segment: tuple


def taylor_polynomial(f: GenFunc, a, b, order: int) -> GenVec:
    """``sum_{j<=order} d^j f(a)/j! (b-a)^j``."""
    a = _as_vec(a, f.gauge)
    b = _as_vec(b, f.gauge)
    h = b - a
    out = evaluate(f, a)
    if order >= 1:
        out = out + mat_apply(differential(f, a, 1), h)
    if order >= 2:
        Hs = differential(f, a, 2)
        quad = [_quadratic_form(H, h).scale(GenNum.const(f.gauge, "0.5"))[0] for H in Hs]
        out = out + GenVec(quad)
    if order > 2:
        raise ValueError("Taylor polynomials beyond order 2 need third derivatives")
    return out


def _quadratic_form(H: GenMat, h: GenVec) -> GenVec:
    Hh = mat_apply(H, h)

    def net(e):
        a = Hh.values(e)
        b = h.values(e)
        out = np.empty((len(a), 1), dtype=object)
        out[:, 0] = [sum(x * y for x, y in zip(ra, rb)) for ra, rb in zip(a, b)]
        return out

    return GenVec.from_block(H.gauge, net, 1, label="hHh")


def taylor_remainder_bound(f: GenFunc, a, b, order: int, probes: int = 17) -> TaylorBound:
    """Lagrange remainder bound maximized over equispaced probes on ``[a, b]``."""
    if order not in (0, 1):
        raise ValueError("only orders 0 and 1 are supported (second derivatives are the highest available)")
    a = _as_vec(a, f.gauge)
    b = _as_vec(b, f.gauge)
    h = b - a
    hn = vec_norm(h)
    fact = math.factorial(order + 1)
    ts = [_mp.mp(i) / (probes - 1) for i in range(probes)] if probes > 1 else [_mp.ZERO]

    def net(e):
        av = a.values(e)
        hv = h.values(e)
        best = _mp.zeros(len(e))
        for t in ts:
            _, J, H = f.jet_eval(e, av + hv * t, order + 1)
            if order == 0:
                nrm = [spectral_norm_sample(Ji) for Ji in J]
            else:
                nrm = [gmpy2.sqrt(sum(spectral_norm_sample(Hij) ** 2 for Hij in Hi)) for Hi in H]
            best = np.maximum(best, np.array(nrm, dtype=object))
        return best * hn.values(e) ** (order + 1) / fact

    bound = GenNum(f.gauge, net, label=f"R{order}")
    return TaylorBound(order, bound, (a, b))


def compose(f: GenFunc, g: GenFunc) -> GenFunc:
    """``f o g``; derivatives follow the chain rule through the jets."""
    if g.d != f.n:
        raise DimensionMismatch(f"cannot compose {f.label} (dim {f.n}) after {g.label} (codim {g.d})")
    if not f.gauge.same_as(g.gauge):
        raise ValueError("cannot compose functions built on different gauges")

    def kernel(eps, rho, params, xs):
        return f.apply(eps, g.apply(eps, xs))

    return GenFunc(f.gauge, g.n, f.d, kernel, label=f"({f.label} o {g.label})")


# --------------------------------------------------------------------------
# constructors


def from_exprs(gauge: Gauge, bodies: Sequence, n: int, env: expr.ParamEnv | None = None, label: str = "f") -> GenFunc:
    """Compile DSL bodies (one per output) in ``u1..un`` into a GenFunc."""
    env = env if env is not None else expr.ParamEnv(gauge, dim=n)
    asts = [expr.parse(b) if isinstance(b, str) else b for b in bodies]
    for ast in asts:
        k = expr.max_var(ast)
        if k > n:
            raise UnboundName(f"u{k} exceeds the declared dimension {n}", name=f"u{k}")
        for name in expr.params_of(ast):
            env[name]

    def kernel(eps, rho, params, xs):
        ev = expr.Evaluator(eps, inputs=xs, params=params, rho=rho)
        return [ev.run(ast) for ast in asts]

    text = ", ".join(expr.print_ast(a) for a in asts)
    return GenFunc(gauge, n, len(asts), kernel, env=env, label=label if label != "f" else f"[{text}]")


def identity(gauge: Gauge, n: int = 1) -> GenFunc:
    return GenFunc(gauge, n, n, lambda eps, rho, params, xs: list(xs), label="id")


def _example1_kernel(eps, rho, params, xs):
    u = xs[0]
    return [jets.sub(_mp.full(len(eps), 1), jets.mul(u, u))]


def _example2_kernel(eps, rho, params, xs):
    u = xs[0]
    H, a = params["H"], params["a"]
    return [jets.sub(H * (a * a), jets.mul(H, jets.mul(u, u)))]


def ramp_mollified_kernel(eps, rho, params, xs):
    """Convolution of ``max(0, x)`` with the scaled bump, piecewise in ``x/rho``."""
    x = xs[0]
    v = jets.value(x)
    left = np.array([xi <= -r for xi, r in zip(v, rho)], dtype=bool)
    right = np.array([xi >= r for xi, r in zip(v, rho)], dtype=bool)
    # middle branch (3 rho - x)(rho + x)^3 / (16 rho^3)
    a = jets.sub(3 * rho, x)
    b = jets.add(rho, x)
    b3 = jets.mul(jets.mul(b, b), b)
    mid = jets.div(jets.mul(a, b3), 16 * rho**3)
    out = jets.select(right, x, mid)
    return [jets.select(left, _mp.zeros(len(v)), out)]


def builtin(name: str, params=None, gauge: Gauge | None = None) -> GenFunc:
    """One of the registered example functions."""
    params = dict(params or {})
    if gauge is None:
        gauge = next((p.gauge for p in params.values() if isinstance(p, GenNum)), None) or make_gauge("eps")
    if name == "example1":
        return GenFunc(gauge, 1, 1, _example1_kernel, label="example1")
    if name == "example2":
        for key in ("a", "H"):
            if key not in params:
                raise MissingParam(f"example2 needs parameter {key!r}", name=key)
        env = expr.ParamEnv(gauge, {"a": params["a"], "H": params["H"]}, dim=1)
        return GenFunc(gauge, 1, 1, _example2_kernel, env=env, label="example2")
    if name == "ramp_mollified":
        return GenFunc(gauge, 1, 1, ramp_mollified_kernel, label="ramp_mollified")
    raise UnknownBuiltin(f"unknown builtin {name!r}; known: {', '.join(BUILTINS)}", name=name)


def clamp_unit(f: GenFunc) -> GenFunc:
    """Componentwise ``min(max(f, 0), 1)`` of the representatives."""

    def kernel(eps, rho, params, xs):
        ys = f.apply(eps, xs)
        m = len(eps)
        zero, one = _mp.zeros(m), _mp.full(m, 1)
        return [jets.minimum(jets.maximum(y, zero), one) for y in ys]

    return GenFunc(f.gauge, f.n, f.d, kernel, label=f"clamp({f.label})")
