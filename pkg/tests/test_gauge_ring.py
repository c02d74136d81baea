import math

import gmpy2
import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import SMALL_GRID, power_net, random_gennum
from genfix import _mp
from genfix.errors import AllZeroTail, InvalidGauge, InvalidGrid, MalformedSpec, NotInvertible
from genfix.gauge_ring import (
    DEFAULT_GRID,
    EpsGrid,
    GenNum,
    Kind,
    Relation,
    Verdict,
    abs_min_max,
    classify,
    compare,
    is_invertible,
    is_negligible,
    is_strictly_positive,
    leading_order,
    make_gauge,
    ring_ops,
    sharp_converges,
)


# -- grid ------------------------------------------------------------------


def test_grid_is_geometric_and_decreasing():
    g = DEFAULT_GRID
    s = g.samples
    assert len(s) == 64
    assert s[0] == 0.5 and math.isclose(s[-1], 1e-9, rel_tol=1e-12)
    assert np.all(np.diff(s) < 0)
    ratios = s[1:] / s[:-1]
    assert np.allclose(ratios, ratios[0], rtol=1e-12)
    assert len(g.tail) == 16 and np.array_equal(g.tail, s[-16:])


def test_representative_indices():
    assert DEFAULT_GRID.representative_indices == [0, 16, 32, 47, 63]


@pytest.mark.parametrize(
    "kw", [dict(eps_max=1.5), dict(eps_min=0.6), dict(count=1), dict(tail_fraction=0)]
)
def test_grid_rejects_bad_fields(kw):
    with pytest.raises(InvalidGrid):
        EpsGrid(**kw)


# -- gauges ----------------------------------------------------------------


def test_gauge_eps_is_identity():
    g = make_gauge("eps")
    assert g.rho([0.1])[0] == _mp.mp(0.1)


def test_gauge_power():
    g = make_gauge("eps^2")
    assert math.isclose(float(g.rho([0.1])[0]), 0.01, rel_tol=1e-15)


def test_gauge_rational_power_and_expression():
    g = make_gauge("eps^1/2")
    assert math.isclose(float(g.rho([0.25])[0]), 0.5, rel_tol=1e-15)
    h = make_gauge("eps/(1+eps)")
    assert math.isclose(float(h.rho([0.5])[0]), 1 / 3, rel_tol=1e-15)


def test_gauge_leaving_unit_interval_is_rejected():
    with pytest.raises(InvalidGauge):
        make_gauge("eps+1")


def test_gauge_not_vanishing_is_rejected():
    with pytest.raises(InvalidGauge):
        make_gauge("0.5")


@pytest.mark.parametrize("spec", ["", "eps^^2", "u1 + eps", "eps @ 2"])
def test_gauge_malformed(spec):
    with pytest.raises(MalformedSpec):
        make_gauge(spec)


# -- ring operations --------------------------------------------------------


def test_add_doubles(gauge, drho):
    s = ring_ops(drho, drho, "add")
    tail = DEFAULT_GRID.tail
    assert all(v == 2 * r for v, r in zip(s.tail(), gauge.rho(tail)))
    assert abs(leading_order(s).exponent - 1) < 1e-9


def test_mul_by_reciprocal_is_one(drho):
    one = ring_ops(drho, drho ** -1, "mul")
    assert all(abs(v - 1) < _mp.rel_eps() * 4 for v in one.values(DEFAULT_GRID))


def test_div_by_zero_net_raises(gauge):
    zero = GenNum.const(gauge, 0)
    with pytest.raises(NotInvertible) as exc:
        ring_ops(GenNum.const(gauge, 1), zero, "div")
    assert exc.value.witness["eps"] is not None


def test_div_by_negative_is_fine(gauge, drho):
    q = ring_ops(GenNum.const(gauge, 1), -drho, "div")
    assert math.isclose(float(q.at(1e-3)), -1e3, rel_tol=1e-14)


def test_unknown_op(drho):
    with pytest.raises(ValueError):
        ring_ops(drho, drho, "pow")


def test_abs_min_max_examples(drho):
    a, mn, mx = abs_min_max(-drho, drho)
    assert all(x == y for x, y in zip(a.values(DEFAULT_GRID), drho.values(DEFAULT_GRID)))
    _, mn, mx = abs_min_max(drho, drho**2)
    e = DEFAULT_GRID.samples
    assert all(x == y for x, y in zip(mn.values(e), (drho**2).values(e)))
    assert all(x == y for x, y in zip(mx.values(e), drho.values(e)))
    _, mn, mx = abs_min_max(drho, drho)
    assert all(x == y == z for x, y, z in zip(mn.values(e), mx.values(e), drho.values(e)))


def test_evaluation_is_deterministic_and_memoized(gauge):
    calls = []

    def net(e):
        calls.append(len(e))
        return _mp.as_mp_array(e) ** 2

    x = GenNum(gauge, net)
    a = x.values(DEFAULT_GRID)
    b = x.values(DEFAULT_GRID)
    assert all(p == q for p, q in zip(a, b))
    assert calls == [64]


# -- leading order ----------------------------------------------------------


def test_leading_order_exact_power(drho):
    fit = leading_order(drho**3)
    assert abs(fit.exponent - 3) < 1e-9 and fit.residual <= 1e-9
    assert fit.samples_used == 16


def test_leading_order_coefficient(gauge):
    fit = leading_order(power_net(gauge, 5, 2))
    assert abs(fit.exponent - 2) < 1e-9
    assert abs(fit.log_coeff - math.log(5)) < 1e-9


def test_leading_order_exponentially_small(gauge):
    x = GenNum.from_function(gauge, lambda e: gmpy2.exp(-1 / _mp.mp(e)))
    # stop at 1e-6 so that no sample underflows the mpfr exponent range
    grid = EpsGrid(0.5, 1e-6, 64, 0.25)
    fit = leading_order(x, grid)
    # oracle: the same least-squares fit done independently in mpmath
    tail = grid.tail
    lx = [float(mpmath.log(e)) for e in tail]
    ly = [float(-1 / mpmath.mpf(e)) for e in tail]
    slope = np.polyfit(lx, ly, 1)[0]
    assert math.isclose(fit.exponent, slope, rel_tol=1e-9)
    assert fit.exponent > 1e4 and fit.samples_used == 16
    assert not fit.reliable


def test_leading_order_zero_tail(gauge):
    with pytest.raises(AllZeroTail):
        leading_order(GenNum.const(gauge, 0))


def test_refit_is_identical(gauge):
    x = power_net(gauge, 2, 1.5, 0.3)
    assert leading_order(x) == leading_order(x)


@pytest.mark.parametrize("q", [k / 2 for k in range(-10, 11)])
def test_leading_order_of_drho_powers(drho, q):
    assert abs(leading_order(drho**q).exponent - q) < 1e-9


# -- semi-decisions ----------------------------------------------------------


def test_negligible_zero(gauge):
    d = is_negligible(GenNum.const(gauge, 0), n_max=25)
    assert d.verdict is Verdict.YES


def test_negligible_drho_no_at_two(drho):
    d = is_negligible(drho, n_max=3)
    assert d.verdict is Verdict.NO and d.order == 2


def test_negligible_exponential(gauge):
    x = GenNum.from_function(gauge, lambda e: gmpy2.exp(-1 / _mp.mp(e)))
    # oracle: exp(-1/eps) <= eps^10 at every tail eps
    assert all(mpmath.exp(-1 / mpmath.mpf(e)) <= mpmath.mpf(e) ** 10 for e in DEFAULT_GRID.tail)
    assert is_negligible(x, n_max=10).verdict is Verdict.YES


def test_positive_drho(drho):
    d = is_strictly_positive(drho)
    assert d.verdict is Verdict.YES and d.order == 2


def test_positive_negative_constant(gauge):
    assert is_strictly_positive(GenNum.const(gauge, -1)).verdict is Verdict.NO


def test_positive_zero_is_undecided(gauge):
    for m in (1, 5, 40):
        assert is_strictly_positive(GenNum.const(gauge, 0), m_max=m).verdict is Verdict.UNDECIDED


def test_invertible_uses_absolute_value(drho):
    assert is_invertible(-drho**3)


# -- compare / classify -----------------------------------------------------


def test_compare_lt(drho):
    assert compare(drho**2, drho).relation is Relation.LT


def test_compare_oscillating_incomparable(gauge, drho):
    x = drho * GenNum.from_function(gauge, lambda e: gmpy2.sin(1 / _mp.mp(e)))
    # oracle: sin(1/eps) changes sign on the tail of the grid
    signs = np.sign(np.sin(1 / DEFAULT_GRID.tail))
    assert set(signs) == {-1.0, 1.0}
    assert compare(x, 0).relation is Relation.INCOMPARABLE


def test_compare_negligible_difference(gauge):
    one = GenNum.const(gauge, 1)
    y = one + GenNum.from_function(gauge, lambda e: gmpy2.exp(-1 / _mp.mp(e)))
    assert compare(one, y).relation is Relation.APPROX_EQUAL


def test_compare_gt_and_leq(drho, gauge):
    assert compare(drho, drho**2).relation is Relation.GT
    # x <= y up to a negligible excess
    bump = GenNum.from_function(gauge, lambda e: gmpy2.exp(-1 / _mp.mp(e)))
    y = drho * GenNum.from_function(gauge, lambda e: 1 + gmpy2.sin(1 / _mp.mp(e)))
    c = compare(y - bump, y)
    assert c.leq


def test_classify_examples(drho):
    assert classify(drho).kind is Kind.INFINITESIMAL
    assert classify(drho**-1).kind is Kind.INFINITE
    c = classify(1 + drho)
    assert c.kind is Kind.FINITE_NONZERO
    assert abs(c.near_standard_value - 1.0) <= 1e-6


def test_classify_oscillating_has_no_standard_part(gauge):
    x = GenNum.from_function(gauge, lambda e: 2 + gmpy2.sin(1 / _mp.mp(e)))
    c = classify(x)
    assert c.kind is Kind.FINITE_NONZERO and c.near_standard_value is None


# -- sharp convergence -----------------------------------------------------


def test_sharp_powers(drho):
    seq = [drho**n for n in range(8)]
    rep = sharp_converges(seq, 0 * drho, [1, 2, 3])
    assert rep[3].passed and rep[3].N == 3
    assert rep[1].N == 1 and rep[2].N == 2


def test_sharp_standard_sequence_fails(gauge):
    seq = [GenNum.const(gauge, 1 / n) for n in range(1, 30)]
    rep = sharp_converges(seq, GenNum.const(gauge, 0), [1], start=1)
    assert not rep[1].passed and rep[1].witness[0] == 29


def test_sharp_banach_orbit_of_drho_cos(gauge):
    rho = gauge.drho
    xs = [GenNum.const(gauge, 0)]
    for _ in range(8):
        prev = xs[-1]
        xs.append(GenNum(gauge, lambda e, p=prev: rho.values(e) * _mp.cos(p.values(e))))
    rep = sharp_converges(xs, xs[-1], [1, 2, 3])
    assert all(r.passed for r in rep.values())
    # oracle: classical double iteration at eps = 1e-3
    x, e = 0.0, 1e-3
    for _ in range(8):
        x = e * math.cos(x)
    assert math.isclose(float(xs[-1].at(e)), x, rel_tol=1e-14)


# -- properties ------------------------------------------------------------

nets = st.builds(
    lambda c, a, w, k: (c, a, w, k),
    st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3),
    st.floats(-3, 3),
    st.floats(0, 0.9),
    st.floats(0.5, 3),
)


def _net(gauge, p):
    return power_net(gauge, *p)


ULP = _mp.rel_eps()


@given(nets, nets, nets)
def test_ring_axioms_pointwise(p, q, r):
    g = make_gauge("eps")
    x, y, z = (_net(g, v) for v in (p, q, r))
    e = SMALL_GRID.samples
    lhs = ((x + y) + z).values(e)
    rhs = (x + (y + z)).values(e)
    scale = np.abs(x.values(e)) + np.abs(y.values(e)) + np.abs(z.values(e))
    assert all(abs(a - b) <= 2 * ULP * s for a, b, s in zip(lhs, rhs, scale))
    lhs = (x * (y + z)).values(e)
    rhs = (x * y + x * z).values(e)
    scale = np.abs(x.values(e)) * (np.abs(y.values(e)) + np.abs(z.values(e)))
    assert all(abs(a - b) <= 2 * ULP * s for a, b, s in zip(lhs, rhs, scale))


@given(nets, nets)
def test_compare_consistency(p, q):
    g = make_gauge("eps")
    x, y = _net(g, p), _net(g, q)
    c = compare(x, y, SMALL_GRID)
    if c.relation is Relation.LT:
        assert c.leq
    assert compare(x, x, SMALL_GRID).relation is Relation.APPROX_EQUAL
    if c.relation is Relation.APPROX_EQUAL:
        assert compare(y, x, SMALL_GRID).relation is Relation.APPROX_EQUAL


@given(st.floats(0.1, 5), st.floats(0.25, 3))
def test_reciprocal_of_positive_infinitesimal_is_infinite(c, a):
    g = make_gauge("eps")
    x = power_net(g, c, a)
    if classify(x).kind is Kind.INFINITESIMAL and is_strictly_positive(x):
        assert classify(ring_ops(GenNum.const(g, 1), x, "div")).kind is Kind.INFINITE


@given(nets)
def test_positivity_certificate_allows_division(p):
    g = make_gauge("eps")
    x = _net(g, p)
    if is_strictly_positive(x):
        q = ring_ops(GenNum.const(g, 1), x, "div")
        assert all(v * w == 1 or abs(v * w - 1) <= 4 * ULP for v, w in zip(q.tail(), x.tail()))


def test_norm_axioms_on_random_pairs(gauge):
    rng = np.random.default_rng(7)
    e = SMALL_GRID.samples
    for _ in range(50):
        x, y = random_gennum(gauge, rng), random_gennum(gauge, rng)
        xv, yv = x.values(e), y.values(e)
        ax, ay = np.abs(xv), np.abs(yv)
        assert all(a == max(v, -v) for a, v in zip(ax, xv))
        assert all(a >= 0 for a in ax)
        assert all(v == 0 for a, v in zip(ax, xv) if a == 0)
        assert all(abs(p * q) == a * b for p, q, a, b in zip(xv, yv, ax, ay))
        assert all(abs(p + q) <= a + b for p, q, a, b in zip(xv, yv, ax, ay))
        assert all(abs(a - b) <= abs(p - q) for p, q, a, b in zip(xv, yv, ax, ay))
