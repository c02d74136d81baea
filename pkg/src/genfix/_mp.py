"""Multiple-precision scalar helpers shared by every module.

All per-epsilon values are ``gmpy2.mpfr`` numbers held in numpy object
arrays.  The working precision is a process-wide setting; threads that did
not import the package get it installed lazily by :func:`ensure_context`.
"""

from __future__ import annotations

import math
from fractions import Fraction

import gmpy2
import numpy as np

DEFAULT_PRECISION = 1024

_precision = DEFAULT_PRECISION


def _install() -> None:
    gmpy2.set_context(
        gmpy2.context(
            precision=_precision,
            emin=gmpy2.get_emin_min(),
            emax=gmpy2.get_emax_max(),
        )
    )


def ensure_context() -> None:
    ctx = gmpy2.get_context()
    if ctx.precision != _precision:
        _install()


def set_precision(bits: int) -> None:
    """Change the working precision (in bits) for all later evaluations.

    Values already memoized inside GenNum caches keep their old precision.
    """
    global _precision
    if bits < 53:
        raise ValueError("precision below double precision is not supported")
    _precision = int(bits)
    _install()


def precision() -> int:
    return _precision


def rel_eps() -> gmpy2.mpfr:
    """Unit roundoff of the working precision."""
    return gmpy2.mpfr(2) ** (1 - _precision)


_install()

ZERO = gmpy2.mpfr(0)
ONE = gmpy2.mpfr(1)


def mp(value) -> gmpy2.mpfr:
    """Convert ``value`` to mpfr; decimal strings are rounded once, exactly."""
    if isinstance(value, gmpy2.mpfr(0).__class__):
        return value
    if isinstance(value, Fraction):
        return gmpy2.mpfr(value.numerator) / gmpy2.mpfr(value.denominator)
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    return gmpy2.mpfr(value)


def full(m: int, value) -> np.ndarray:
    out = np.empty(m, dtype=object)
    out[:] = [mp(value)] * m
    return out


def as_mp_array(values) -> np.ndarray:
    seq = [mp(v) for v in np.asarray(values, dtype=object).ravel()]
    out = np.empty(len(seq), dtype=object)
    out[:] = seq
    return out


def zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(ZERO)
    return out


def vectorize(fn):
    """Lift a scalar mpfr function to object arrays."""
    ufunc = np.frompyfunc(fn, 1, 1)

    def apply(a):
        res = ufunc(a)
        if isinstance(res, np.ndarray):
            return res.astype(object, copy=False)
        return res

    return apply


sin = vectorize(gmpy2.sin)
cos = vectorize(gmpy2.cos)
exp = vectorize(gmpy2.exp)
log = vectorize(gmpy2.log)
sqrt = vectorize(gmpy2.sqrt)


def is_finite(x) -> bool:
    return bool(gmpy2.is_finite(x))


def all_finite(a: np.ndarray) -> bool:
    return all(gmpy2.is_finite(v) for v in np.asarray(a, dtype=object).ravel())


def log_abs(x) -> float:
    """``log|x|`` as a float; ``-inf`` for zero, finite for any nonzero mpfr."""
    if x == 0:
        return -math.inf
    return float(gmpy2.log(abs(mp(x))))


def fmt(x, digits: int = 17) -> str:
    """Decimal rendering with ``digits`` significant digits (exponent unbounded)."""
    x = mp(x)
    if gmpy2.is_nan(x):
        return "nan"
    if gmpy2.is_infinite(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        return "0"
    return format(x, f".{digits}g")


def to_float(x) -> float:
    return float(mp(x))
