"""Generalized numbers, generalized smooth functions and fixed-point solvers."""

from .gauge_ring import (
    DEFAULT_GRID,
    EpsGrid,
    Gauge,
    GenNum,
    classify,
    compare,
    is_invertible,
    is_negligible,
    is_strictly_positive,
    leading_order,
    make_gauge,
    sharp_converges,
)
from .gen_linalg import GenMat, GenVec, mat_apply, mat_inverse, operator_norm, vec_norm

__version__ = "0.1.0"
