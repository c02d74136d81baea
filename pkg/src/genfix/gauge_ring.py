"""Generalized numbers as epsilon-nets under a gauge.

A :class:`GenNum` is a deterministic net ``eps -> real`` plus a memo cache of
its samples.  Nothing here is symbolic: every order statement is a
certificate on the tail of an :class:`EpsGrid` and the semi-decision
procedures return three-valued verdicts with witnesses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Sequence

import gmpy2
import numpy as np

from . import _mp
from .errors import (
    AllZeroTail,
    InsufficientSamples,
    InvalidGauge,
    InvalidGrid,
    MalformedSpec,
    NotInvertible,
)

N_MAX = 10
M_MAX = 40
FIT_TOL = 0.05
UNRELIABLE_RESIDUAL = 0.1
NEAR_STANDARD_RTOL = 1e-6
FINITE_BOUND = 1e6
MARGIN = 1e-9


# --------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class EpsGrid:
    eps_max: float = 0.5
    eps_min: float = 1e-9
    count: int = 64
    tail_fraction: float = 0.25

    def __post_init__(self):
        if not 0 < self.eps_max <= 1:
            raise InvalidGrid(f"eps_max must lie in (0, 1], got {self.eps_max}")
        if not 0 < self.eps_min < self.eps_max:
            raise InvalidGrid(f"eps_min must lie in (0, eps_max), got {self.eps_min}")
        if int(self.count) != self.count or self.count < 2:
            raise InvalidGrid(f"count must be an integer >= 2, got {self.count}")
        if not 0 < self.tail_fraction <= 1:
            raise InvalidGrid(f"tail_fraction must lie in (0, 1], got {self.tail_fraction}")

    @cached_property
    def samples(self) -> np.ndarray:
        i = np.arange(self.count, dtype=float)
        ratio = self.eps_min / self.eps_max
        return self.eps_max * ratio ** (i / (self.count - 1))

    @property
    def tail_size(self) -> int:
        return max(1, math.ceil(self.tail_fraction * self.count))

    @cached_property
    def tail(self) -> np.ndarray:
        return self.samples[-self.tail_size:]

    @property
    def representative_indices(self) -> list[int]:
        return [round(q * (self.count - 1)) for q in (0, 0.25, 0.5, 0.75, 1)]

    @property
    def representative(self) -> np.ndarray:
        return self.samples[self.representative_indices]


DEFAULT_GRID = EpsGrid()


def _eps_array(eps) -> np.ndarray:
    if isinstance(eps, EpsGrid):
        return eps.samples
    return np.atleast_1d(np.asarray(eps, dtype=float))


# --------------------------------------------------------------------------
# gauge


class Gauge:
    """The net ``rho`` fixing the scale of infinitesimals."""

    def __init__(self, net: Callable[[np.ndarray], np.ndarray], description: str):
        self._net = net
        self.description = description
        self._cache: dict[float, object] = {}
        self._drho: GenNum | None = None

    def __repr__(self):
        return f"Gauge({self.description!r})"

    def rho(self, eps) -> np.ndarray:
        eps = _eps_array(eps)
        keys = eps.tolist()
        missing = [e for e in dict.fromkeys(keys) if e not in self._cache]
        if missing:
            _mp.ensure_context()
            vals = self._net(np.asarray(missing, dtype=float))
            for e, v in zip(missing, vals):
                self._cache.setdefault(e, _mp.mp(v))
        out = np.empty(len(keys), dtype=object)
        out[:] = [self._cache[e] for e in keys]
        return out

    @property
    def drho(self) -> "GenNum":
        if self._drho is None:
            self._drho = GenNum(self, self.rho, label="drho")
        return self._drho

    def validate(self, grid: EpsGrid = DEFAULT_GRID, vanish_threshold: float = 1e-2) -> None:
        eps = grid.samples
        r = self.rho(eps)
        for e, v in zip(eps, r):
            if not (_mp.is_finite(v) and 0 < v <= 1):
                raise InvalidGauge(f"rho leaves (0, 1] at eps={float(e)!r}", eps=float(e))
        for i in range(1, len(r)):
            if r[i] > r[i - 1]:
                raise InvalidGauge(
                    f"rho increases as eps decreases at eps={float(eps[i])!r}", eps=float(eps[i])
                )
        if r[-1] >= vanish_threshold:
            raise InvalidGauge(
                f"rho does not vanish: rho({float(eps[-1])!r}) >= {vanish_threshold}",
                eps=float(eps[-1]),
            )

    def same_as(self, other: "Gauge") -> bool:
        return self is other or self.description == other.description


def _parse_exponent(text: str) -> Fraction:
    text = text.strip()
    if text.startswith("(") and text.endswith(")"):
        text = text[1:-1]
    return Fraction(text.replace(" ", ""))


def make_gauge(spec: str, grid: EpsGrid = DEFAULT_GRID) -> Gauge:
    """Build a gauge from ``"eps"``, ``"eps^p"`` (rational p > 0) or an eps-expression."""
    if not isinstance(spec, str) or not spec.strip():
        raise MalformedSpec("empty gauge spec")
    s = spec.strip()
    if s == "eps":
        gauge = Gauge(lambda e: _mp.as_mp_array(e), "eps")
    elif s.startswith("eps^") and _looks_rational(s[4:]):
        try:
            p = _parse_exponent(s[4:])
        except (ValueError, ZeroDivisionError) as exc:
            raise MalformedSpec(f"bad gauge exponent in {spec!r}") from exc
        if p <= 0:
            raise InvalidGauge(f"gauge exponent must be positive, got {p}")
        pm = _mp.mp(p)
        gauge = Gauge(lambda e, pm=pm: _mp.as_mp_array(e) ** pm, f"eps^{p}")
    else:
        from . import expr

        try:
            ast = expr.parse(expr.tokenize(s))
        except (expr.LexError, expr.ParseError) as exc:
            raise MalformedSpec(f"cannot parse gauge {spec!r}: {exc}") from exc
        free = expr.free_names(ast)
        if free - {"eps"}:
            raise MalformedSpec(f"gauge may only depend on eps, found {sorted(free - {'eps'})}")
        gauge = Gauge(lambda e, ast=ast: expr.evaluate_raw(ast, e), s)
    gauge.validate(grid)
    return gauge


def _looks_rational(text: str) -> bool:
    try:
        _parse_exponent(text)
        return True
    except (ValueError, ZeroDivisionError):
        return False


# --------------------------------------------------------------------------
# generalized numbers


def _coerce(gauge: Gauge, value) -> "GenNum":
    if isinstance(value, GenNum):
        if not value.gauge.same_as(gauge):
            raise ValueError(f"gauge mismatch: {value.gauge} vs {gauge}")
        return value
    return GenNum.const(gauge, value)


class GenNum:
    """A generalized number ``[x_eps]``: an evaluable net with memoized samples."""

    __slots__ = ("gauge", "_net", "_cache", "label", "__weakref__")

    def __init__(self, gauge: Gauge, net: Callable[[np.ndarray], np.ndarray], label: str | None = None):
        self.gauge = gauge
        self._net = net
        self._cache: dict[float, object] = {}
        self.label = label

    def __repr__(self):
        return f"GenNum({self.label or '<net>'}, gauge={self.gauge.description})"

    @classmethod
    def const(cls, gauge: Gauge, value) -> "GenNum":
        v = _mp.mp(value)
        return cls(gauge, lambda e, v=v: _mp.full(len(e), v), label=_mp.fmt(v, 8))

    @classmethod
    def from_function(cls, gauge: Gauge, fn: Callable[[float], object], label: str | None = None) -> "GenNum":
        """Net from a scalar function of a float eps."""

        def net(e):
            return _mp.as_mp_array([fn(float(x)) for x in e])

        return cls(gauge, net, label)

    # -- evaluation ---------------------------------------------------------

    def values(self, eps) -> np.ndarray:
        eps = _eps_array(eps)
        keys = eps.tolist()
        cache = self._cache
        missing = [e for e in dict.fromkeys(keys) if e not in cache]
        if missing:
            _mp.ensure_context()
            vals = self._net(np.asarray(missing, dtype=float))
            if len(vals) != len(missing):
                raise ValueError("net returned the wrong number of samples")
            for e, v in zip(missing, vals):
                cache.setdefault(e, _mp.mp(v))
        out = np.empty(len(keys), dtype=object)
        out[:] = [cache[e] for e in keys]
        return out

    def at(self, eps: float):
        return self.values([eps])[0]

    def tail(self, grid: EpsGrid = DEFAULT_GRID) -> np.ndarray:
        return self.values(grid.tail)

    # -- ring structure -----------------------------------------------------

    def _binary(self, other, fn, sym: str, reflected: bool = False) -> "GenNum":
        o = _coerce(self.gauge, other)
        a, b = (o, self) if reflected else (self, o)
        return GenNum(self.gauge, lambda e: fn(a.values(e), b.values(e)), label=f"({a.label} {sym} {b.label})")

    def __add__(self, other):
        return self._binary(other, lambda p, q: p + q, "+")

    def __radd__(self, other):
        return self._binary(other, lambda p, q: p + q, "+", reflected=True)

    def __sub__(self, other):
        return self._binary(other, lambda p, q: p - q, "-")

    def __rsub__(self, other):
        return self._binary(other, lambda p, q: p - q, "-", reflected=True)

    def __mul__(self, other):
        return self._binary(other, lambda p, q: p * q, "*")

    def __rmul__(self, other):
        return self._binary(other, lambda p, q: p * q, "*", reflected=True)

    def __truediv__(self, other):
        return ring_ops(self, _coerce(self.gauge, other), "div")

    def __rtruediv__(self, other):
        return ring_ops(_coerce(self.gauge, other), self, "div")

    def __neg__(self):
        return GenNum(self.gauge, lambda e: -self.values(e), label=f"(-{self.label})")

    def __pos__(self):
        return self

    def __abs__(self):
        return GenNum(self.gauge, lambda e: np.abs(self.values(e)), label=f"|{self.label}|")

    def __pow__(self, q):
        """Integer, rational or real powers; non-integer powers need a positive base."""
        if isinstance(q, GenNum):
            raise TypeError("use the DSL for net-valued exponents")
        qf = Fraction(q) if not isinstance(q, str) else Fraction(q)
        if qf.denominator == 1 and qf >= 0:
            n = int(qf)
            return GenNum(self.gauge, lambda e: self.values(e) ** n, label=f"{self.label}^{n}")
        if qf.denominator == 1:
            base = _require_invertible(self, DEFAULT_GRID)
            n = int(qf)
            return GenNum(self.gauge, lambda e: _mp.ONE / base.values(e) ** (-n), label=f"{self.label}^{n}")
        dec = is_strictly_positive(self, DEFAULT_GRID)
        if not dec:
            raise NotInvertible(
                f"non-integer power needs a strictly positive base ({dec.verdict.value})",
                eps=dec.eps,
            )
        qm = _mp.mp(qf)
        return GenNum(self.gauge, lambda e: self.values(e) ** qm, label=f"{self.label}^{qf}")

    def div_unchecked(self, other) -> "GenNum":
        """Pointwise quotient without the ring invertibility certificate."""
        return self._binary(other, lambda p, q: p / q, "/")


def const(gauge: Gauge, value) -> GenNum:
    return GenNum.const(gauge, value)


def _require_invertible(y: GenNum, grid: EpsGrid) -> GenNum:
    pos = is_strictly_positive(y, grid)
    if pos:
        return y
    neg = is_strictly_positive(-y, grid)
    if neg:
        return y
    witness = pos.eps if pos.eps is not None else neg.eps
    raise NotInvertible(f"{y.label} is not invertible on the grid tail", eps=witness, m=M_MAX)


def ring_ops(x: GenNum, y: GenNum, op: str, grid: EpsGrid = DEFAULT_GRID) -> GenNum:
    """Pointwise ring operation; ``div`` requires a strict-sign certificate of ``y``."""
    y = _coerce(x.gauge, y)
    if op == "add":
        return x + y
    if op == "sub":
        return x - y
    if op == "mul":
        return x * y
    if op == "div":
        _require_invertible(y, grid)
        return GenNum(x.gauge, lambda e: x.values(e) / y.values(e), label=f"({x.label} / {y.label})")
    raise ValueError(f"unknown ring operation {op!r}")


def abs_min_max(x: GenNum, y: GenNum) -> tuple[GenNum, GenNum, GenNum]:
    y = _coerce(x.gauge, y)
    return abs(x), gmin(x, y), gmax(x, y)


def gmin(x: GenNum, y) -> GenNum:
    y = _coerce(x.gauge, y)
    return GenNum(x.gauge, lambda e: np.minimum(x.values(e), y.values(e)), label=f"min({x.label}, {y.label})")


def gmax(x: GenNum, y) -> GenNum:
    y = _coerce(x.gauge, y)
    return GenNum(x.gauge, lambda e: np.maximum(x.values(e), y.values(e)), label=f"max({x.label}, {y.label})")


# --------------------------------------------------------------------------
# asymptotic order


@dataclass(frozen=True)
class OrderFit:
    """``|x_eps| ~ C * rho_eps**exponent`` fitted in log-log on the tail."""

    exponent: float
    log_coeff: float
    residual: float
    samples_used: int

    @property
    def reliable(self) -> bool:
        return self.residual <= UNRELIABLE_RESIDUAL

    def as_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "log_coeff": self.log_coeff,
            "residual": self.residual,
            "samples_used": self.samples_used,
        }


def fit_power_law(log_rho: Sequence[float], log_abs: Sequence[float]) -> OrderFit:
    """Least-squares slope of ``log|x|`` against ``log rho``."""
    lr = np.asarray(log_rho, dtype=float)
    la = np.asarray(log_abs, dtype=float)
    if len(lr) < 2:
        raise InsufficientSamples("need at least two nonzero samples for an order fit")
    A = np.column_stack([lr, np.ones_like(lr)])
    (slope, icpt), *_ = np.linalg.lstsq(A, la, rcond=None)
    resid = la - (slope * lr + icpt)
    rms = float(np.sqrt(np.mean(resid**2)))
    return OrderFit(float(slope), float(icpt), rms, len(lr))


def leading_order(x: GenNum, grid: EpsGrid = DEFAULT_GRID) -> OrderFit:
    vals = x.tail(grid)
    rho = x.gauge.rho(grid.tail)
    pairs = [(_mp.log_abs(r), _mp.log_abs(v)) for r, v in zip(rho, vals) if v != 0]
    if not pairs:
        raise AllZeroTail(f"{x.label} is exactly negligible on the grid")
    if any(math.isnan(p[1]) for p in pairs):
        raise InsufficientSamples(f"{x.label} has NaN samples on the tail")
    lr, la = zip(*pairs)
    return fit_power_law(lr, la)


def order_or_none(x: GenNum, grid: EpsGrid = DEFAULT_GRID) -> OrderFit | None:
    """Like :func:`leading_order` but ``None`` for an exactly-zero tail."""
    try:
        return leading_order(x, grid)
    except AllZeroTail:
        return None


# --------------------------------------------------------------------------
# semi-decisions


class Verdict(str, Enum):
    YES = "certified_yes"
    NO = "certified_no"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class Decision:
    """A three-valued verdict; ``order`` is the n or m witness, ``eps`` the sample."""

    verdict: Verdict
    order: int | None = None
    eps: float | None = None

    def __bool__(self):
        return self.verdict is Verdict.YES

    def as_dict(self) -> dict:
        return {"verdict": self.verdict.value, "order": self.order, "eps": self.eps}


def _rho_powers(gauge: Gauge, eps: np.ndarray, n: float) -> np.ndarray:
    return gauge.rho(eps) ** _mp.mp(n)


def is_negligible(x: GenNum, grid: EpsGrid = DEFAULT_GRID, n_max: int = N_MAX) -> Decision:
    tail = grid.tail
    a = np.abs(x.values(tail))
    for n in range(1, n_max + 1):
        pw = _rho_powers(x.gauge, tail, n)
        ok = [ai <= pi for ai, pi in zip(a, pw)]
        if all(ok):
            continue
        first = ok.index(False)
        if all(ai > pi * (1 + MARGIN) for ai, pi in zip(a, pw)):
            return Decision(Verdict.NO, n, float(tail[first]))
        return Decision(Verdict.UNDECIDED, n, float(tail[first]))
    return Decision(Verdict.YES, n_max, None)


def is_strictly_positive(x: GenNum, grid: EpsGrid = DEFAULT_GRID, m_max: int = M_MAX) -> Decision:
    tail = grid.tail
    v = x.values(tail)
    for e, vi in zip(tail, v):
        if vi < 0 or gmpy2.is_nan(vi):
            return Decision(Verdict.NO, None, float(e))
    last_fail = None
    for m in range(1, m_max + 1):
        pw = _rho_powers(x.gauge, tail, m)
        fails = [i for i, (vi, pi) in enumerate(zip(v, pw)) if not vi > pi]
        if not fails:
            return Decision(Verdict.YES, m, None)
        last_fail = float(tail[fails[0]])
    return Decision(Verdict.UNDECIDED, m_max, last_fail)


def is_invertible(x: GenNum, grid: EpsGrid = DEFAULT_GRID, m_max: int = M_MAX) -> Decision:
    """Lemma-mayer test applied to ``|x|``."""
    return is_strictly_positive(abs(x), grid, m_max)


def below_power(x: GenNum, q: float, grid: EpsGrid = DEFAULT_GRID) -> Decision:
    """Certify ``|x| < drho**q`` on the tail.

    Pointwise domination alone is fooled by standard sequences that happen to
    be small at every sampled eps, so a reliable order fit must also reach q.
    """
    tail = grid.tail
    a = np.abs(x.values(tail))
    pw = _rho_powers(x.gauge, tail, q)
    for e, ai, pi in zip(tail, a, pw):
        if not ai < pi:
            return Decision(Verdict.NO, None, float(e))
    fit = order_or_none(x, grid) if any(ai != 0 for ai in a) else None
    if fit is not None and fit.reliable and fit.exponent < q - FIT_TOL:
        return Decision(Verdict.UNDECIDED, None, float(tail[-1]))
    return Decision(Verdict.YES, None, None)


# --------------------------------------------------------------------------
# comparison and classification


class Relation(str, Enum):
    LEQ = "leq"
    LT = "lt"
    GEQ = "geq"
    GT = "gt"
    APPROX_EQUAL = "approx_equal"
    INCOMPARABLE = "incomparable"


@dataclass(frozen=True)
class Comparison:
    relation: Relation
    diagnostics: dict = field(default_factory=dict)

    @property
    def leq(self) -> bool:
        return self.relation in (Relation.LT, Relation.LEQ, Relation.APPROX_EQUAL)

    @property
    def geq(self) -> bool:
        return self.relation in (Relation.GT, Relation.GEQ, Relation.APPROX_EQUAL)


def compare(x: GenNum, y, grid: EpsGrid = DEFAULT_GRID, n_max: int = N_MAX) -> Comparison:
    y = _coerce(x.gauge, y)
    diff = y - x
    neg = is_negligible(diff, grid, n_max)
    diag = {"negligible": neg.as_dict()}
    if neg:
        return Comparison(Relation.APPROX_EQUAL, diag)
    pos = is_strictly_positive(diff, grid)
    diag["y_minus_x_positive"] = pos.as_dict()
    if pos:
        return Comparison(Relation.LT, diag)
    npos = is_strictly_positive(-diff, grid)
    diag["x_minus_y_positive"] = npos.as_dict()
    if npos:
        return Comparison(Relation.GT, diag)
    d = diff.tail(grid)
    signs = {1 if v > 0 else -1 for v in d if v != 0}
    diag["tail_signs"] = sorted(signs)
    # slack: the part of x - y (resp. y - x) that violates the order must be negligible
    over = GenNum(x.gauge, lambda e: np.maximum(-diff.values(e), _mp.ZERO))
    under = GenNum(x.gauge, lambda e: np.maximum(diff.values(e), _mp.ZERO))
    if is_negligible(over, grid, n_max):
        return Comparison(Relation.LEQ, diag)
    if is_negligible(under, grid, n_max):
        return Comparison(Relation.GEQ, diag)
    return Comparison(Relation.INCOMPARABLE, diag)


class Kind(str, Enum):
    INFINITESIMAL = "infinitesimal"
    FINITE_NONZERO = "finite_nonzero"
    INFINITE = "infinite"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class Classification:
    kind: Kind
    near_standard_value: float | None
    confidence: float
    fit: OrderFit | None = None

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "near_standard_value": self.near_standard_value,
            "confidence": self.confidence,
            "fit": self.fit.as_dict() if self.fit else None,
        }


def _converged_value(vals: np.ndarray) -> float | None:
    if len(vals) < 2:
        return None
    last, prev = vals[-1], vals[-2]
    scale = max(1.0, abs(_mp.to_float(last)))
    if abs(_mp.to_float(last - prev)) <= NEAR_STANDARD_RTOL * scale:
        return _mp.to_float(last)
    return None


def classify(x: GenNum, grid: EpsGrid = DEFAULT_GRID, finite_bound: float = FINITE_BOUND) -> Classification:
    tail = grid.tail
    vals = x.values(tail)
    a = np.abs(vals)
    if all(v == 0 for v in a):
        return Classification(Kind.INFINITESIMAL, 0.0, 1.0, None)
    rho_min = x.gauge.rho(tail)[-1]
    small = gmpy2.sqrt(rho_min)
    large = 1 / small
    try:
        fit = leading_order(x, grid)
    except InsufficientSamples:
        fit = None
    weight = 1.0 if fit is not None and fit.reliable else 0.5
    n = len(a)
    if fit is not None and max(a) <= small and fit.exponent > 0:
        frac = sum(1 for v in a if v <= small) / n
        return Classification(Kind.INFINITESIMAL, 0.0, frac * weight, fit)
    if fit is not None and min(a) >= large and fit.exponent < 0:
        frac = sum(1 for v in a if v >= large) / n
        return Classification(Kind.INFINITE, None, frac * weight, fit)
    lo, hi = _mp.mp(1 / finite_bound), _mp.mp(finite_bound)
    if all(lo <= v <= hi for v in a):
        return Classification(Kind.FINITE_NONZERO, _converged_value(vals), weight, fit)
    return Classification(Kind.INDETERMINATE, None, 0.0, fit)


# --------------------------------------------------------------------------
# sharp convergence


@dataclass(frozen=True)
class SharpResult:
    passed: bool
    N: int | None
    witness: tuple[int, float] | None = None

    def as_dict(self) -> dict:
        return {"passed": self.passed, "N": self.N, "witness": list(self.witness) if self.witness else None}


def _distance(a, b) -> GenNum:
    from .gen_linalg import GenVec, vec_norm

    if isinstance(a, GenVec):
        return vec_norm(a - b)
    return abs(a - b)


def sharp_converges(
    seq: Sequence,
    limit,
    q_set: Iterable[float],
    grid: EpsGrid = DEFAULT_GRID,
    start: int = 0,
) -> dict:
    """For each q the least N with ``|x_n - limit| < drho**q`` for all listed n > N.

    ``seq[i]`` is the term with index ``start + i``.  A q fails when the last
    available term does not pass; the witness is ``(n, eps)`` of that term.
    """
    if not seq:
        raise ValueError("sharp_converges needs a nonempty sequence")
    dists = [_distance(x, limit) for x in seq]
    report = {}
    for q in q_set:
        decisions = [below_power(d, q, grid) for d in dists]
        last = len(decisions) - 1
        if not decisions[last]:
            report[q] = SharpResult(False, None, (start + last, decisions[last].eps))
            continue
        i = last
        while i - 1 >= 0 and decisions[i - 1]:
            i -= 1
        report[q] = SharpResult(True, max(start + i - 1, 0), None)
    return report
