import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import SMALL_GRID
from genfix import _mp
from genfix.errors import DimensionMismatch, NotInvertibleInRing
from genfix.gauge_ring import DEFAULT_GRID, GenNum, leading_order, make_gauge
from genfix.gen_linalg import (
    GenMat,
    GenVec,
    bilinear_norm,
    det,
    inverse_sample,
    mat_apply,
    mat_inverse,
    mat_mul,
    operator_norm,
    spectral_norm_sample,
    vec_norm,
)

TAIL = DEFAULT_GRID.tail


def as_float(a):
    return np.vectorize(float, otypes=[float])(a)


def test_vec_norm_constants(gauge):
    v = GenVec.const(gauge, [3, 4])
    assert all(x == 5 for x in vec_norm(v).values(DEFAULT_GRID))


def test_vec_norm_drho(gauge, drho):
    v = GenVec([drho, GenNum.const(gauge, 0)])
    assert all(a == b for a, b in zip(vec_norm(v).tail(), drho.tail()))


def test_vec_norm_infinite_component(drho):
    n = vec_norm(GenVec([drho, drho**-1]))
    # oracle: sqrt(rho^2 + rho^-2) fitted in double precision
    lr = np.log(TAIL)
    ly = np.log(np.sqrt(TAIL**2 + TAIL**-2.0))
    slope = np.polyfit(lr, ly, 1)[0]
    fit = leading_order(n)
    assert abs(fit.exponent - slope) < 1e-9 and abs(fit.exponent + 1) < 1e-6


def test_vec_norm_matches_euclidean(gauge, drho):
    v = GenVec([drho, 1 - drho, drho**2 * 3])
    vals = as_float(v.values(TAIL))
    assert np.allclose(as_float(vec_norm(v).tail()), np.linalg.norm(vals, axis=1), rtol=4e-16)


def test_mat_apply_examples(gauge, drho):
    v = GenVec([drho, 1 + drho])
    w = mat_apply(GenMat.identity(gauge, 2), v)
    assert all((a == b).all() for a, b in zip(w.values(TAIL), v.values(TAIL)))
    w = mat_apply(GenMat.diag(gauge, [drho, drho]), GenVec.const(gauge, [1, 1]))
    assert all(a == r and b == r for (a, b), r in zip(w.values(TAIL), drho.tail()))
    w = mat_apply(GenMat.from_rows(gauge, [[1, 2], [3, 4]]), GenVec.const(gauge, [1, 1]))
    assert all(a == 3 and b == 7 for a, b in w.values(DEFAULT_GRID))


def test_mat_apply_dimension_mismatch(gauge):
    with pytest.raises(DimensionMismatch):
        mat_apply(GenMat.identity(gauge, 2), GenVec.const(gauge, [1, 2, 3]))


def test_inverse_identity(gauge):
    inv = mat_inverse(GenMat.identity(gauge, 3))
    for a in inv.values(TAIL):
        assert (a == np.eye(3)).all()


def test_inverse_diag(gauge, drho):
    inv = mat_inverse(GenMat.diag(gauge, [drho, drho**-1]))
    for a, r in zip(inv.values(TAIL), drho.tail()):
        assert abs(a[0, 0] * r - 1) < 1e-300 and abs(a[1, 1] / r - 1) < 1e-300
        assert a[0, 1] == 0 and a[1, 0] == 0


def test_inverse_two_by_two_closed_form(gauge, drho):
    A = GenMat.from_rows(gauge, [[1, drho], [drho, 1]])
    inv = mat_inverse(A).values(TAIL)
    for a, e in zip(inv, TAIL):
        # oracle: closed-form 2x2 inverse in double precision
        want = np.array([[1, -e], [-e, 1]]) / (1 - e * e)
        assert np.allclose(as_float(a), want, rtol=1e-15, atol=0)


def test_inverse_of_singular_raises(gauge, drho):
    A = GenMat.from_rows(gauge, [[1, 1], [1, 1]])
    with pytest.raises(NotInvertibleInRing) as exc:
        mat_inverse(A)
    assert exc.value.witness["eps"] is not None


def test_inverse_sample_pivot_floor():
    a = np.array([[_mp.mp(1), _mp.mp(1)], [_mp.mp(1), _mp.mp(1) + _mp.mp(2) ** -1010]], dtype=object)
    with pytest.raises(NotInvertibleInRing):
        inverse_sample(a, 0.1)


def test_operator_norm_examples(gauge, drho):
    assert all(v == 3 for v in operator_norm(GenMat.diag(gauge, [2, 3])).tail())
    assert all(v == 0 for v in operator_norm(GenMat.from_rows(gauge, [[0, 0], [0, 0]])).tail())
    A = GenMat.from_rows(gauge, [[0, drho**-1], [0, 0]])
    for v, r in zip(operator_norm(A).tail(), drho.tail()):
        assert abs(v * r - 1) < 1e-300


def test_bilinear_norm_single_form(gauge):
    H = [GenMat.diag(gauge, [2, -5])]
    assert all(v == 5 for v in bilinear_norm(H).tail())


def mat_strategy(n):
    return st.lists(st.floats(-10, 10), min_size=n * n, max_size=n * n)


def _mp_mat(vals, n):
    return np.array([_mp.mp(v) for v in vals], dtype=object).reshape(n, n)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@given(data=st.data())
def test_spectral_norm_matches_numpy(n, data):
    vals = data.draw(mat_strategy(n))
    a = _mp_mat(vals, n)
    want = np.linalg.norm(np.array(vals).reshape(n, n), 2)
    got = float(spectral_norm_sample(a))
    assert math.isclose(got, want, rel_tol=1e-10, abs_tol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
@given(data=st.data())
def test_submultiplicative(n, data):
    a = _mp_mat(data.draw(mat_strategy(n)), n)
    b = _mp_mat(data.draw(mat_strategy(n)), n)
    lhs = spectral_norm_sample(a.dot(b))
    na, nb = spectral_norm_sample(a), spectral_norm_sample(b)
    assert lhs <= na * nb + _mp.mp(1e-12) * max(na * nb, 1)


@pytest.mark.parametrize("n", [2, 3])
@given(data=st.data())
def test_apply_bounded_by_norm(n, data):
    a = _mp_mat(data.draw(mat_strategy(n)), n)
    v = np.array([_mp.mp(x) for x in data.draw(st.lists(st.floats(-10, 10), min_size=n, max_size=n))], dtype=object)
    av = a.dot(v)
    lhs = _mp.mp(sum(x * x for x in av)) ** 0.5
    rhs = spectral_norm_sample(a) * _mp.mp(sum(x * x for x in v)) ** 0.5
    assert lhs <= rhs * (1 + _mp.mp(1e-12)) + _mp.mp(1e-300)


def _random_genmat(gauge, rng, n):
    """Well-conditioned random matrix net: I*n + perturbations scaled by rho powers."""
    coeffs = rng.uniform(-1, 1, (n, n))
    powers = rng.integers(0, 3, (n, n))
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            base = gauge.drho ** int(powers[i, j]) * float(coeffs[i, j])
            row.append(base + (n + 1 if i == j else 0))
        rows.append(row)
    return GenMat.from_rows(gauge, rows)


@pytest.mark.parametrize("seed", range(6))
def test_inverse_involution_and_det_product(gauge, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    A = _random_genmat(gauge, rng, n)
    inv = mat_inverse(A, SMALL_GRID)
    back = mat_inverse(inv, SMALL_GRID)
    tail = SMALL_GRID.tail
    for a, b in zip(A.values(tail), back.values(tail)):
        scale = max(abs(x) for x in a.ravel())
        assert all(abs(x - y) <= _mp.mp(1e-9) * scale for x, y in zip(a.ravel(), b.ravel()))
    for d1, d2 in zip(det(A).values(tail), det(inv).values(tail)):
        assert abs(d1 * d2 - 1) <= _mp.mp(1e-9)
    v = GenVec.const(gauge, list(rng.uniform(-1, 1, n)))
    w = mat_apply(A, mat_apply(inv, v))
    for x, y in zip(w.values(tail), v.values(tail)):
        assert all(abs(p - q) <= _mp.mp(1e-10) * max(abs(q), 1) for p, q in zip(x, y))


def test_mat_mul_matches_numpy(gauge, drho):
    A = GenMat.from_rows(gauge, [[1, drho], [2, 3]])
    B = GenMat.from_rows(gauge, [[drho, 0], [1, -1]])
    C = mat_mul(A, B)
    for c, e in zip(C.values(TAIL), TAIL):
        want = np.array([[1, e], [2, 3]]) @ np.array([[e, 0], [1, -1]])
        assert np.allclose(as_float(c), want, rtol=1e-15)


def test_identity_apply_is_exact():
    g = make_gauge("eps^2")
    v = GenVec([g.drho * 3, g.drho ** -1])
    w = mat_apply(GenMat.identity(g, 2), v)
    assert all((a == b).all() for a, b in zip(w.values(DEFAULT_GRID), v.values(DEFAULT_GRID)))
