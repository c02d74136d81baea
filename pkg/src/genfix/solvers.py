"""Fixed-point and root-finding machinery on generalized smooth functions.

Everything is verified per eps on the grid tail.  Sampled checks are labeled
``sampled-pass``: the hypotheses quantify over whole balls, the checks cover
a seeded finite sample of them.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import gmpy2
import numpy as np

from . import _mp
from .errors import (
    ContractionNotCertified,
    DegenerateOrbit,
    DifferentialNotInvertible,
    DimensionMismatch,
    InsufficientData,
    NoFixedPointFound,
    NoSharpConvergence,
    NotInvertibleInBall,
    OrbitLeftDomain,
    SamplingDegenerate,
)
from .gauge_ring import (
    DEFAULT_GRID,
    FIT_TOL,
    M_MAX,
    N_MAX,
    Decision,
    EpsGrid,
    GenNum,
    OrderFit,
    Verdict,
    below_power,
    fit_power_law,
    is_invertible,
    order_or_none,
    sharp_converges,
)
from .gen_linalg import GenVec, det, inverse_sample, spectral_norm_sample, vec_norm
from .gsf import GenFunc, _as_vec, clamp_unit, differential, evaluate

PASS = "sampled-pass"
FAIL = "fail"
UNDECIDED = "undecided"
HYPOTHESES = ("8BI", "9BI", "10BI", "10bisBI", "Jacob")
INFLATION = 1.1
DAMPING = (1.0, 0.5, 0.25, 0.1)

DomainCheck = Callable[[np.ndarray, np.ndarray], np.ndarray]


def eps_rng(seed: int, eps: float) -> np.random.Generator:
    """Generator keyed by the seed and the exact bits of ``eps``."""
    bits = struct.unpack("<Q", struct.pack("<d", float(eps)))[0]
    return np.random.default_rng([int(seed), bits])


def box_domain(lo: float, hi: float) -> DomainCheck:
    """Per-eps predicate ``lo <= x_j <= hi`` for every component."""
    lo_m, hi_m = _mp.mp(lo), _mp.mp(hi)

    def check(eps, pts):
        return np.array([all(lo_m <= x <= hi_m for x in row) for row in pts], dtype=bool)

    return check


def _roundoff(*terms):
    """Absolute rounding allowance for a cancellation among ``terms``."""
    scale = sum(abs(t) for t in terms)
    return scale * _mp.mp(2) ** (64 - _mp.precision())


# --------------------------------------------------------------------------
# contraction on the orbit


@dataclass(frozen=True)
class StrongInfinitesimal:
    verdict: Verdict
    k_witness: Fraction | None
    eps: float | None = None

    def __bool__(self):
        return self.verdict is Verdict.YES

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "k_witness": str(self.k_witness) if self.k_witness is not None else None,
            "eps": self.eps,
        }


@dataclass
class ContractionReport:
    alpha: GenNum
    alpha_order: OrderFit | None
    per_step_ratios: list
    strong_infinitesimal: StrongInfinitesimal
    orbit: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return bool(self.strong_infinitesimal)

    def as_dict(self) -> dict:
        return {
            "alpha_order": self.alpha_order.as_dict() if self.alpha_order else None,
            "strong_infinitesimal": self.strong_infinitesimal.as_dict(),
            "steps": len(self.orbit) - 1,
        }


def _check_orbit_point(x: GenVec, n: int, domain_check: DomainCheck | None, grid: EpsGrid):
    if domain_check is None:
        return
    tail = grid.tail
    ok = np.asarray(domain_check(tail, x.values(tail)), dtype=bool)
    if not ok.all():
        i = int(np.flatnonzero(~ok)[0])
        raise OrbitLeftDomain(f"orbit point {n} leaves the domain at eps={float(tail[i])!r}", n=n, eps=float(tail[i]))


def _orbit(g: GenFunc, x0: GenVec, steps: int, domain_check, grid) -> list[GenVec]:
    orbit = [x0]
    _check_orbit_point(x0, 0, domain_check, grid)
    for n in range(1, steps + 1):
        orbit.append(evaluate(g, orbit[-1]))
        _check_orbit_point(orbit[-1], n, domain_check, grid)
    return orbit


def verify_contraction_on_orbit(
    g: GenFunc,
    x0,
    steps: int = 6,
    domain_check: DomainCheck | None = None,
    grid: EpsGrid = DEFAULT_GRID,
) -> ContractionReport:
    """Estimate the contraction constant on the orbit of ``x0`` and test it is strongly infinitesimal."""
    x0 = _as_vec(x0, g.gauge)
    if steps < 3:
        raise ValueError("need at least 3 steps")
    if not (g.n == g.d == x0.dim):
        raise DimensionMismatch("g must map R^d to R^d with d = dim x0")
    orbit = _orbit(g, x0, steps, domain_check, grid)
    gaps = [vec_norm(orbit[i + 1] - orbit[i]) for i in range(steps)]
    if all(v == 0 for v in gaps[0].tail(grid)):
        raise DegenerateOrbit("g(x0) = x0 on the grid tail", fixed_point=x0)

    def alpha_net(e):
        cols = [s.values(e) for s in gaps]
        out = np.empty(len(e), dtype=object)
        for i in range(len(e)):
            best = _mp.ZERO
            for n in range(1, steps):
                prev, cur = cols[n - 1][i], cols[n][i]
                if prev != 0:
                    best = max(best, cur / prev)
            out[i] = best
        return out

    alpha = GenNum(g.gauge, alpha_net, label="alpha")

    def ratio(n):
        def net(e):
            a, s0, sn = alpha.values(e), gaps[0].values(e), gaps[n].values(e)
            out = np.empty(len(e), dtype=object)
            out[:] = [_mp.ZERO if sni == 0 else sni / (ai**n * s0i) for ai, s0i, sni in zip(a, s0, sn)]
            return out

        return GenNum(g.gauge, net, label=f"ratio{n}")

    ratios = [ratio(n) for n in range(steps)]
    fit = order_or_none(alpha, grid)
    strong = _strong_infinitesimal(alpha, fit, grid)
    return ContractionReport(alpha, fit, ratios, strong, orbit)


def _strong_infinitesimal(alpha: GenNum, fit: OrderFit | None, grid: EpsGrid) -> StrongInfinitesimal:
    tail = grid.tail
    a = alpha.values(tail)
    if fit is None:
        # alpha vanishes on the tail: every power of drho bounds it
        return StrongInfinitesimal(Verdict.YES, Fraction(N_MAX), None)
    rho = alpha.gauge.rho(tail)
    if fit.reliable:
        k = Fraction(math.floor((fit.exponent + FIT_TOL) * 4), 4)
        while k > 0:
            km = _mp.mp(k)
            if all(ai <= r**km for ai, r in zip(a, rho)):
                return StrongInfinitesimal(Verdict.YES, k, None)
            k -= Fraction(1, 4)
        if fit.exponent < FIT_TOL:
            bad = next((e for e, ai, r in zip(tail, a, rho) if ai > r), tail[0])
            return StrongInfinitesimal(Verdict.NO, None, float(bad))
    return StrongInfinitesimal(Verdict.UNDECIDED, None, float(tail[-1]))


# --------------------------------------------------------------------------
# Banach iteration


@dataclass
class BanachResult:
    orbit: list
    fixed_point: GenVec
    cauchy_report: dict
    residual_order: OrderFit | None
    contraction: ContractionReport | None
    forced: bool = False
    converged: bool = True

    def as_dict(self) -> dict:
        return {
            "steps": len(self.orbit) - 1,
            "forced": self.forced,
            "converged": self.converged,
            "residual_order": self.residual_order.as_dict() if self.residual_order else None,
            "cauchy": {str(q): r.as_dict() for q, r in self.cauchy_report.items()},
            "contraction": self.contraction.as_dict() if self.contraction else None,
        }


def banach_solve(
    g: GenFunc,
    x0,
    q_set: Sequence = (1, 2, 3),
    max_steps: int = 40,
    domain_check: DomainCheck | None = None,
    force: bool = False,
    grid: EpsGrid = DEFAULT_GRID,
) -> BanachResult:
    """Iterate ``g`` from ``x0`` until the step beats ``drho**max(q_set)``."""
    x0 = _as_vec(x0, g.gauge)
    q_set = sorted(q_set)
    q_max = q_set[-1]
    try:
        report = verify_contraction_on_orbit(g, x0, 3, domain_check, grid)
    except DegenerateOrbit:
        return BanachResult([x0], x0, {q: sharp_converges([x0], x0, [q], grid)[q] for q in q_set}, None, None)
    if not report.certified and not force:
        raise ContractionNotCertified(
            f"orbit contraction not certified ({report.strong_infinitesimal.verdict.value})",
            report=report,
        )
    orbit = [x0]
    for n in range(max_steps):
        nxt = evaluate(g, orbit[-1])
        _check_orbit_point(nxt, n + 1, domain_check, grid)
        orbit.append(nxt)
        if below_power(vec_norm(nxt - orbit[-2]), q_max, grid):
            break
    else:
        raise NoSharpConvergence(
            f"step size did not beat drho^{q_max} within {max_steps} steps", orbit=orbit, q=q_max
        )
    x_star = orbit[-1]
    resid = order_or_none(vec_norm(evaluate(g, x_star) - x_star), grid)
    cauchy = sharp_converges(orbit, x_star, q_set, grid)
    return BanachResult(orbit, x_star, cauchy, resid, report, forced=force and not report.certified)


# --------------------------------------------------------------------------
# Newton-Raphson


@dataclass
class NewtonResult:
    iterates: list
    root: GenVec
    residual_orders: list
    invertibility_log: list
    converged: bool

    def as_dict(self) -> dict:
        return {
            "steps": len(self.iterates) - 1,
            "converged": self.converged,
            "residual_orders": [r.as_dict() if r else None for r in self.residual_orders],
            "invertibility": [d.as_dict() for d in self.invertibility_log],
        }


def newton_step(f: GenFunc, x: GenVec) -> GenVec:
    """``x - df(x)^{-1} f(x)`` computed per eps."""

    def net(e):
        xv = x.values(e)
        val, J, _ = f.jet_eval(e, xv, 1)
        out = np.empty(xv.shape, dtype=object)
        for i in range(len(e)):
            if f.n == 1:
                out[i, 0] = xv[i, 0] - val[i, 0] / J[i, 0, 0]
            else:
                out[i] = xv[i] - inverse_sample(J[i], float(e[i])).dot(val[i])
        return out

    return GenVec.from_block(f.gauge, net, f.n, label="x")


def newton_solve(
    f: GenFunc,
    x0,
    max_steps: int = 8,
    stop_q: float = 5,
    grid: EpsGrid = DEFAULT_GRID,
) -> NewtonResult:
    x0 = _as_vec(x0, f.gauge)
    if f.n != f.d or x0.dim != f.n:
        raise DimensionMismatch("Newton needs a map R^d -> R^d and a start point in R^d")
    iterates = [x0]
    residuals = []
    log = []
    converged = False
    for n in range(max_steps + 1):
        x = iterates[-1]
        res = vec_norm(evaluate(f, x))
        residuals.append(order_or_none(res, grid))
        if below_power(res, stop_q, grid):
            converged = True
            break
        if n == max_steps:
            break
        dec = is_invertible(det(differential(f, x, 1)), grid)
        log.append(dec)
        if not dec:
            raise DifferentialNotInvertible(
                f"df(x_{n}) is not invertible ({dec.verdict.value}) at eps={dec.eps}", n=n, eps=dec.eps
            )
        iterates.append(newton_step(f, x))
    return NewtonResult(iterates, iterates[-1], residuals, log, converged)


def quadratic_constant(f: GenFunc, root) -> GenNum:
    """``|df(x*)^{-1}| |d2f(x*)| / 2``, the constant of quadratic convergence."""
    root = _as_vec(root, f.gauge)

    def net(e):
        _, J, H = f.jet_eval(e, root.values(e), 2)
        out = np.empty(len(e), dtype=object)
        for i in range(len(e)):
            inv = spectral_norm_sample(inverse_sample(J[i], float(e[i])))
            h = gmpy2.sqrt(sum(spectral_norm_sample(Hj) ** 2 for Hj in H[i]))
            out[i] = inv * h / 2
        return out

    return GenNum(f.gauge, net, label="Mq")


def estimate_convergence_order(iterates: Sequence, reference_root, grid: EpsGrid = DEFAULT_GRID) -> dict:
    """Median over the tail of per-eps slopes of ``log e_{n+1}`` against ``log e_n``."""
    if len(iterates) < 3:
        raise InsufficientData("need at least three iterates")
    first = iterates[0]
    gauge = first.gauge
    root = _as_vec(reference_root, gauge)
    errs = [vec_norm(_as_vec(x, gauge) - root).tail(grid) for x in iterates]
    tail = grid.tail
    rho = gauge.rho(tail)
    scale = max(_mp.ONE, max(abs(v) for row in root.values(tail) for v in row))
    floor = scale * _mp.mp(2) ** (32 - _mp.precision())
    slopes, consts = [], []
    for i, e in enumerate(tail):
        seq = [errs[n][i] for n in range(len(errs))]
        usable = [n for n, v in enumerate(seq) if v > floor]
        if len(usable) < 3:
            raise InsufficientData(f"fewer than 3 usable errors at eps={float(e)!r}", eps=float(e))
        pairs = [(n, n + 1) for n in usable if n + 1 in usable][-3:]
        if len(pairs) < 2:
            raise InsufficientData(f"fewer than 2 consecutive usable error pairs at eps={float(e)!r}", eps=float(e))
        xs = [_mp.log_abs(seq[a]) for a, _ in pairs]
        ys = [_mp.log_abs(seq[b]) for _, b in pairs]
        fit = fit_power_law(xs, ys)
        slopes.append(fit.exponent)
        a, b = pairs[-1]
        consts.append(seq[b] / seq[a] ** 2)
    order = float(np.median(slopes))
    const_fit = fit_power_law([_mp.log_abs(r) for r in rho], [_mp.log_abs(c) for c in consts])
    return {"order": order, "constant_order": const_fit, "per_eps": slopes}


# --------------------------------------------------------------------------
# the Ben-Israel certificate


@dataclass
class HypothesisVerdict:
    status: str
    witness: dict | None = None
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def as_dict(self) -> dict:
        return {"status": self.status, "witness": self.witness, **self.detail}


@dataclass
class BenIsraelCertificate:
    x0: GenVec
    r: GenNum
    M: GenNum
    N: GenNum
    k: GenNum
    R: Fraction
    verdicts: dict
    sampling: dict
    estimated: bool
    notes: list = field(default_factory=list)
    invertibility: HypothesisVerdict | None = None
    newton_check: dict | None = None

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    @property
    def status(self) -> str:
        statuses = [v.status for v in self.verdicts.values()]
        if self.invertibility is not None:
            statuses.append(self.invertibility.status)
        if FAIL in statuses:
            return FAIL
        if UNDECIDED in statuses:
            return UNDECIDED
        return PASS

    def constants_table(self, grid: EpsGrid = DEFAULT_GRID) -> dict:
        out = {}
        for name in ("M", "N", "k", "r"):
            g = getattr(self, name)
            fit = order_or_none(g, grid)
            out[name] = {
                "label": g.label,
                "order": fit.as_dict() if fit else None,
                "tail_min": _mp.fmt(min(g.tail(grid)), 17),
                "tail_max": _mp.fmt(max(g.tail(grid)), 17),
            }
        return out

    def as_dict(self, grid: EpsGrid = DEFAULT_GRID) -> dict:
        return {
            "verdicts": {k: v.as_dict() for k, v in self.verdicts.items()},
            "invertibility": self.invertibility.as_dict() if self.invertibility else None,
            "R": str(self.R),
            "estimated": self.estimated,
            "sampling": self.sampling,
            "constants": self.constants_table(grid),
            "notes": list(self.notes),
            "newton_check": self.newton_check,
        }


class _BallSampler:
    """Seeded per-eps sample pairs of the ball ``B_r(x0)`` with f, df and df^{-1}."""

    def __init__(self, f: GenFunc, x0: GenVec, r: GenNum, pairs: int, seed: int, probes: Sequence[GenVec]):
        self.f, self.x0, self.r = f, x0, r
        self.pairs, self.seed = pairs, seed
        self.probes = list(probes)
        self._cache: dict[float, dict] = {}

    def unit_ball(self, eps: float) -> tuple[np.ndarray, np.ndarray]:
        rng = eps_rng(self.seed, eps)
        d = self.f.n

        def draw():
            z = rng.standard_normal((self.pairs, d))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            rad = rng.random(self.pairs) ** (1.0 / d)
            return z * rad[:, None]

        return draw(), draw()

    def __call__(self, eps: float) -> dict:
        eps = float(eps)
        if eps in self._cache:
            return self._cache[eps]
        f = self.f
        d = f.n
        e1 = np.array([eps])
        x0 = self.x0.values(e1)[0]
        r = self.r.values(e1)[0]
        tu, tv = self.unit_ball(eps)
        u = np.array([[x0[j] + r * _mp.mp(t[j]) for j in range(d)] for t in tu], dtype=object).reshape(-1, d)
        v = np.array([[x0[j] + r * _mp.mp(t[j]) for j in range(d)] for t in tv], dtype=object).reshape(-1, d)
        probes = np.array([p.values(e1)[0] for p in self.probes], dtype=object).reshape(-1, d)
        pts = np.concatenate([x0.reshape(1, d), probes, u, v])
        val, J, _ = f.jet_eval(np.full(len(pts), eps), pts, 1)
        rho = f.gauge.rho(e1)[0]
        floor = rho**M_MAX
        inv = []
        singular = []
        for i in range(len(pts)):
            dt = J[i, 0, 0] if d == 1 else _det_small(J[i])
            if abs(dt) <= floor:
                inv.append(None)
                singular.append(i)
            else:
                inv.append(np.array([[1 / J[i, 0, 0]]], dtype=object) if d == 1 else inverse_sample(J[i], eps))
        p = len(probes)
        data = {
            "eps": eps,
            "rho": rho,
            "x0": x0,
            "r": r,
            "pts": pts,
            "val": val,
            "J": J,
            "inv": inv,
            "singular": singular,
            "n_probes": p,
            "u_idx": list(range(1 + p, 1 + p + self.pairs)),
            "v_idx": list(range(1 + p + self.pairs, 1 + p + 2 * self.pairs)),
        }
        self._cache[eps] = data
        return data


def _det_small(a):
    from .gen_linalg import det_sample

    return det_sample(a)


def _norm(x) -> object:
    return gmpy2.sqrt(sum(c * c for c in x)) if len(x) > 1 else abs(x[0])


def _ratios_8(data) -> list:
    """(lhs, |u - v|, slack) for every sampled pair of the 8BI inequality."""
    val, J, pts = data["val"], data["J"], data["pts"]
    out = []
    for iu, iv in zip(data["u_idx"], data["v_idx"]):
        h = pts[iu] - pts[iv]
        lin = J[iv].dot(h)
        resid = lin - val[iu] + val[iv]
        slack = _roundoff(*lin, *val[iu], *val[iv])
        out.append((_norm(resid), _norm(h), slack, iu, iv))
    return out


def _ratios_9(data) -> list:
    val, inv, pts = data["val"], data["inv"], data["pts"]
    out = []
    for iu, iv in zip(data["u_idx"], data["v_idx"]):
        if inv[iu] is None or inv[iv] is None:
            continue
        a = inv[iv].dot(val[iu])
        b = inv[iu].dot(val[iu])
        slack = _roundoff(*a, *b)
        out.append((_norm(a - b), _norm(pts[iu] - pts[iv]), slack, iu, iv))
    return out


def _point(x) -> list:
    return [_mp.to_float(c) for c in x]


def certify_ben_israel(
    f: GenFunc,
    x0,
    r,
    constants: dict | None = None,
    pairs: int = 256,
    seed: int = 0,
    R=None,
    grid: EpsGrid = DEFAULT_GRID,
    invertibility: str = "raise",
    probe_points: Sequence = (),
    newton_check: bool = True,
) -> BenIsraelCertificate:
    """Check the five Newton-Raphson hypotheses on seeded samples of the ball.

    ``constants`` holds ``M``, ``N``, ``k`` (GenNum); without it they are
    estimated from the samples.  Supplied constants that are not positive on
    the tail are replaced by their absolute values and noted.
    ``invertibility="flag"`` reports singular differentials inside the ball as
    a failed check instead of raising.
    """
    gauge = f.gauge
    x0 = _as_vec(x0, gauge)
    r = r if isinstance(r, GenNum) else GenNum.const(gauge, r)
    if f.n != f.d or x0.dim != f.n:
        raise DimensionMismatch("the certificate needs a map R^d -> R^d and x0 in R^d")
    probes = [_as_vec(p, gauge) for p in probe_points]
    sampler = _BallSampler(f, x0, r, pairs, seed, probes)
    tail = grid.tail
    notes: list[str] = []

    # invertibility of df on the sampled ball
    inv_verdict = HypothesisVerdict(PASS)
    for e in tail:
        data = sampler(e)
        if data["singular"]:
            i = data["singular"][0]
            witness = {"x": _point(data["pts"][i]), "eps": float(e)}
            if i == 0:
                witness["where"] = "x0"
            elif i <= data["n_probes"]:
                witness["where"] = f"probe {i}"
            if invertibility == "raise":
                raise NotInvertibleInBall(
                    f"df is singular at x={witness['x']} (eps={float(e)!r})", point=witness["x"], eps=float(e)
                )
            count = len(data["singular"])
            inv_verdict = HypothesisVerdict(FAIL, witness, {"flagged": True, "singular_points": count})
            notes.append(f"df is not invertible inside the ball: {count} sampled points singular at eps={float(e)!r}")
            break
        if all(_norm(data["pts"][iu] - data["pts"][iv]) < _mp.mp("1e-300") for iu, iv in zip(data["u_idx"], data["v_idx"])):
            raise SamplingDegenerate(f"all sampled |u - v| vanish at eps={float(e)!r}", eps=float(e))

    estimated = constants is None
    if estimated:
        M, N, k = _estimate_constants(sampler, gauge)
    else:
        M, N, k = (_positive(constants[name], name, gauge, grid, notes) for name in ("M", "N", "k"))
    if R is None:
        fit = order_or_none(k, grid)
        R = Fraction(N_MAX) if fit is None else Fraction(math.floor((fit.exponent - FIT_TOL) * 8), 8)
        notes.append(f"R chosen from the fitted order of k: {R}")
    R = Fraction(R) if not isinstance(R, Fraction) else R

    verdicts = {
        "8BI": _check_pairs(sampler, tail, M, _ratios_8),
        "9BI": _check_pairs(sampler, tail, N, _ratios_9),
        "10BI": _check_10(sampler, tail, M, N, k),
        "10bisBI": _check_k_power(k, R, grid),
        "Jacob": _check_jacob(sampler, tail, k, r),
    }
    cert = BenIsraelCertificate(
        x0, r, M, N, k, R, verdicts,
        {"pairs": pairs, "seed": seed, "tail_samples": len(tail), "probes": len(probes)},
        estimated, notes, inv_verdict if inv_verdict.status != PASS or invertibility == "flag" else None,
    )
    if newton_check and cert.passed and inv_verdict.passed:
        cert.newton_check = _newton_in_ball(f, x0, r, grid)
    return cert


def _positive(c: GenNum, name: str, gauge, grid: EpsGrid, notes: list) -> GenNum:
    vals = c.tail(grid)
    if any(v <= 0 for v in vals):
        notes.append(
            f"sign discrepancy: supplied {name} is not positive on the grid tail "
            f"(e.g. {_mp.fmt(vals[-1], 6)} at eps={float(grid.tail[-1])!r}); using |{name}|"
        )
        return abs(c)
    return c


def _estimate_constants(sampler: _BallSampler, gauge):
    def sup_ratio(kind):
        def net(e):
            out = np.empty(len(e), dtype=object)
            for i, x in enumerate(e):
                rows = _ratios_8(sampler(x)) if kind == 8 else _ratios_9(sampler(x))
                best = _mp.ZERO
                for lhs, h, _, _, _ in rows:
                    if h != 0:
                        best = max(best, lhs / h)
                out[i] = best * _mp.mp(INFLATION)
            return out

        return net

    M = GenNum(gauge, sup_ratio(8), label="M_est")
    N = GenNum(gauge, sup_ratio(9), label="N_est")

    def k_net(e):
        Mv, Nv = M.values(e), N.values(e)
        out = np.empty(len(e), dtype=object)
        for i, x in enumerate(e):
            data = sampler(x)
            norms = [spectral_norm_sample(a) for a in data["inv"] if a is not None]
            out[i] = Mv[i] * max(norms, default=_mp.ZERO) + Nv[i]
        return out

    k = GenNum(gauge, k_net, label="k_est")
    return M, N, k


def _check_pairs(sampler, tail, C: GenNum, rows_fn) -> HypothesisVerdict:
    Cv = C.values(tail)
    checked = 0
    for e, c in zip(tail, Cv):
        data = sampler(e)
        for lhs, h, slack, iu, iv in rows_fn(data):
            checked += 1
            if lhs > c * h + slack:
                pts = data["pts"]
                return HypothesisVerdict(
                    FAIL,
                    {"u": _point(pts[iu]), "v": _point(pts[iv]), "eps": float(e)},
                    {"lhs": _mp.fmt(lhs, 17), "rhs": _mp.fmt(c * h, 17)},
                )
    if checked == 0:
        return HypothesisVerdict(UNDECIDED, None, {"reason": "no usable sample pairs"})
    return HypothesisVerdict(PASS, None, {"checked": checked})


def _check_10(sampler, tail, M, N, k) -> HypothesisVerdict:
    Mv, Nv, kv = M.values(tail), N.values(tail), k.values(tail)
    checked = 0
    for e, m, n, kk in zip(tail, Mv, Nv, kv):
        data = sampler(e)
        for i, a in enumerate(data["inv"]):
            if a is None:
                continue
            checked += 1
            lhs = m * spectral_norm_sample(a) + n
            if lhs > kk:
                return HypothesisVerdict(
                    FAIL,
                    {"x": _point(data["pts"][i]), "eps": float(e)},
                    {"lhs": _mp.fmt(lhs, 17), "rhs": _mp.fmt(kk, 17)},
                )
    return HypothesisVerdict(PASS, None, {"checked": checked})


def _check_k_power(k: GenNum, R: Fraction, grid: EpsGrid) -> HypothesisVerdict:
    tail = grid.tail
    kv = k.values(tail)
    rho = k.gauge.rho(tail)
    Rm = _mp.mp(R)
    if R <= 0:
        return HypothesisVerdict(FAIL, None, {"reason": "R must be positive", "R": str(R)})
    for e, kk, r in zip(tail, kv, rho):
        if not kk <= r**Rm:
            return HypothesisVerdict(FAIL, {"eps": float(e)}, {"k": _mp.fmt(kk, 17), "rho^R": _mp.fmt(r**Rm, 17)})
    fit = order_or_none(k, grid)
    detail = {"R": str(R), "fit": fit.as_dict() if fit else None}
    if fit is None:
        return HypothesisVerdict(PASS, None, detail)
    if not fit.reliable:
        return HypothesisVerdict(UNDECIDED, {"eps": float(tail[-1])}, detail)
    if fit.exponent < float(R) - FIT_TOL:
        return HypothesisVerdict(FAIL, {"eps": float(tail[-1])}, detail)
    return HypothesisVerdict(PASS, None, detail)


def _check_jacob(sampler, tail, k: GenNum, r: GenNum) -> HypothesisVerdict:
    kv, rv = k.values(tail), r.values(tail)
    for e, kk, rr in zip(tail, kv, rv):
        data = sampler(e)
        a = data["inv"][0]
        if a is None:
            return HypothesisVerdict(FAIL, {"eps": float(e)}, {"reason": "df(x0) is singular"})
        lhs = spectral_norm_sample(a) * _norm(data["val"][0])
        rhs = (1 - kk) * rr
        if lhs > rhs:
            return HypothesisVerdict(FAIL, {"eps": float(e)}, {"lhs": _mp.fmt(lhs, 17), "rhs": _mp.fmt(rhs, 17)})
    return HypothesisVerdict(PASS, None, {"checked": len(tail)})


def _newton_in_ball(f: GenFunc, x0: GenVec, r: GenNum, grid: EpsGrid, steps: int = 6) -> dict:
    """Run Newton from x0 and confirm every iterate stays inside the ball on the tail."""
    tail = grid.tail
    rv = r.values(tail)
    x = x0
    worst = None
    for n in range(1, steps + 1):
        try:
            x = newton_step(f, x)
            dist = vec_norm(x - x0).values(tail)
        except Exception as exc:  # noqa: BLE001 - reported, not raised
            return {"ran": True, "inside_ball": False, "error": str(exc), "step": n}
        for e, dd, rr in zip(tail, dist, rv):
            if not dd < rr:
                return {"ran": True, "inside_ball": False, "step": n, "eps": float(e)}
            q = dd / rr
            worst = q if worst is None or q > worst else worst
    return {"ran": True, "inside_ball": True, "steps": steps, "max_relative_distance": _mp.fmt(worst, 6)}


# --------------------------------------------------------------------------
# Brouwer


@dataclass
class BrouwerResult:
    fixed_point: GenVec
    per_eps_residual: float
    clamped: bool
    method: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"per_eps_residual": self.per_eps_residual, "clamped": self.clamped, "method": self.method}


def _residuals(fbar: GenFunc, eps: float, pts: np.ndarray):
    vals, _, _ = fbar.jet_eval(np.full(len(pts), eps), pts, 0)
    diff = vals - pts
    return vals, np.array([_norm(row) for row in diff], dtype=object)


def _damped(fbar: GenFunc, eps: float, starts: np.ndarray, tol, iters: int = 300):
    """Run every (start, lambda) trajectory together; first one under tol wins."""
    lam = np.repeat(np.array([_mp.mp(l) for l in DAMPING], dtype=object), len(starts))
    x = np.tile(starts, (len(DAMPING), 1))
    best = (None, None)
    for _ in range(iters):
        vals, res = _residuals(fbar, eps, x)
        i = int(np.argmin(res))
        if best[1] is None or res[i] < best[1]:
            best = (x[i].copy(), res[i])
        if res[i] <= tol:
            return x[i].copy(), res[i], "damped"
        x = (1 - lam[:, None]) * x + lam[:, None] * vals
    return best[0], best[1], None


def _refine(fbar: GenFunc, eps: float, x: np.ndarray, tol, steps: int = 60):
    """Projected Newton on ``fbar(x) - x`` with backtracking."""
    d = len(x)
    e1 = np.array([eps])
    _, res = _residuals(fbar, eps, x.reshape(1, d))
    r0 = res[0]
    for _ in range(steps):
        if r0 <= tol:
            break
        val, J, _ = fbar.jet_eval(e1, x.reshape(1, d), 1)
        F = val[0] - x
        A = J[0] - np.eye(d, dtype=object) * _mp.ONE
        try:
            step = inverse_sample(A, eps).dot(F)
        except Exception:  # noqa: BLE001 - singular Jacobian: fall back to a plain step
            step = -F
        t = _mp.ONE
        improved = False
        for _ in range(30):
            cand = np.array([min(max(c, _mp.ZERO), _mp.ONE) for c in x - t * step], dtype=object)
            _, rc = _residuals(fbar, eps, cand.reshape(1, d))
            if rc[0] < r0:
                x, r0, improved = cand, rc[0], True
                break
            t = t / 2
        if not improved:
            break
    return x, r0


def _solve_brouwer_eps(fbar: GenFunc, eps: float, tol, max_restarts: int, seed: int):
    d = fbar.n
    rng = eps_rng(seed, eps)
    starts = [np.full(d, 0.5)] + [rng.random(d) for _ in range(max_restarts)]
    starts = np.array([[_mp.mp(c) for c in s] for s in starts], dtype=object)
    _, res = _residuals(fbar, eps, starts[:1])
    if res[0] <= tol:
        return starts[0], res[0], "probe"
    x, r, how = _damped(fbar, eps, starts, tol)
    if how:
        return x, r, how
    x, r = _refine(fbar, eps, x, tol)
    if r <= tol:
        return x, r, "damped+newton"
    grid_1d = [_mp.mp(i) / 32 for i in range(33)]
    mesh = np.array(np.meshgrid(*[np.array(grid_1d, dtype=object)] * d, indexing="ij"), dtype=object)
    pts = mesh.reshape(d, -1).T.copy()
    _, res = _residuals(fbar, eps, pts)
    order = np.argsort(np.array([float(v) for v in res]))
    best = (x, r)
    for j in order[:8]:
        xr, rr = _refine(fbar, eps, pts[j].copy(), tol)
        if rr < best[1]:
            best = (xr, rr)
        if rr <= tol:
            return xr, rr, "scan+newton"
    return best[0], best[1], None


def brouwer_fixed_point(
    f: GenFunc,
    tol: float = 1e-10,
    max_restarts: int = 8,
    seed: int = 0,
    grid: EpsGrid = DEFAULT_GRID,
) -> BrouwerResult:
    """Per-eps fixed point of the clamped map ``min(max(f, 0), 1)`` on ``[0,1]^d``."""
    if f.n != f.d:
        raise DimensionMismatch("Brouwer needs a self-map of [0,1]^d")
    if f.n > 3:
        raise DimensionMismatch("Brouwer search is limited to d <= 3")
    fbar = clamp_unit(f)
    tolm = _mp.mp(tol)
    methods: dict[float, str] = {}
    residuals: dict[float, object] = {}

    def net(e):
        out = np.empty((len(e), f.n), dtype=object)
        for i, x in enumerate(e):
            pt, r, how = _solve_brouwer_eps(fbar, float(x), tolm, max_restarts, seed)
            if how is None:
                raise NoFixedPointFound(
                    f"search budget exhausted at eps={float(x)!r} with residual {_mp.fmt(r, 6)} "
                    "(a numerical failure only: a fixed point exists)",
                    eps=float(x),
                    best_residual=_mp.to_float(r),
                )
            methods[float(x)] = how
            residuals[float(x)] = r
            out[i] = pt
        return out

    fp = GenVec.from_block(f.gauge, net, f.n, label="x*")
    tail = grid.tail
    pts = fp.values(tail)
    worst = max(residuals[float(e)] for e in tail)
    raw, _, _ = f.jet_eval(tail, pts, 0)
    clamped = any(v < 0 or v > 1 for v in raw.ravel())
    counts: dict[str, int] = {}
    for e in tail:
        counts[methods[float(e)]] = counts.get(methods[float(e)], 0) + 1
    return BrouwerResult(fp, _mp.to_float(worst), clamped, counts)


def verdict_summary(decisions: dict) -> str:
    """Fold verdict strings into one of pass / fail / undecided."""
    vals = list(decisions.values())
    if FAIL in vals:
        return FAIL
    if UNDECIDED in vals:
        return UNDECIDED
    return PASS


__all__ = [
    "BanachResult",
    "BenIsraelCertificate",
    "BrouwerResult",
    "ContractionReport",
    "Decision",
    "NewtonResult",
    "banach_solve",
    "brouwer_fixed_point",
    "certify_ben_israel",
    "estimate_convergence_order",
    "newton_solve",
    "quadratic_constant",
    "verify_contraction_on_orbit",
]
