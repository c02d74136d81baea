"""End-to-end acceptance criteria, one test per criterion.

Each criterion returns a list of named sub-checks. The test prints a single
``criterion N: PASS|FAIL`` line (also repeated in the terminal summary) and
fails if any sub-check fails. Run standalone with
``python tests/test_acceptance.py`` for the bare pass/fail lines.
"""

from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import power_net, random_gennum  # noqa: E402
from test_expr import CORPUS  # noqa: E402
from test_gsf import mollified_ramp_oracle  # noqa: E402

from genfix import _mp, cli  # noqa: E402
from genfix.config import load_config  # noqa: E402
from genfix.errors import GenfixError  # noqa: E402
from genfix.expr import BinOp, Neg, Num, Param, Var, parse, print_ast  # noqa: E402
from genfix.gauge_ring import (  # noqa: E402
    DEFAULT_GRID,
    GenNum,
    Verdict,
    is_strictly_positive,
    leading_order,
    make_gauge,
    ring_ops,
    sharp_converges,
)
from genfix.gen_linalg import GenVec, vec_norm  # noqa: E402
from genfix.gsf import builtin, clamp_unit, evaluate, from_exprs  # noqa: E402
from genfix.solvers import (  # noqa: E402
    HYPOTHESES,
    PASS,
    FAIL,
    box_domain,
    brouwer_fixed_point,
    estimate_convergence_order,
    newton_solve,
    verify_contraction_on_orbit,
)

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"
TAIL = DEFAULT_GRID.tail
ULP = _mp.rel_eps()

RESULTS: list[str] = []


def _gauge():
    return make_gauge("eps")


def _verdict_status(v):
    return v["status"] if isinstance(v, dict) else v


# -- criteria -----------------------------------------------------------------


def criterion_1():
    cfg = load_config(PROBLEMS / "example1_certify.toml")
    t = time.perf_counter()
    report = cli.run(cfg)
    elapsed = time.perf_counter() - t
    checks = [(f"{h} sampled-pass", _verdict_status(report.verdicts.get(h)) == PASS) for h in HYPOTHESES]
    checks.append((f"runtime {elapsed:.2f}s < 5s", elapsed < 5))
    return checks


def criterion_2():
    g = _gauge()
    drho = g.drho
    f = builtin("example1", gauge=g)
    res = newton_solve(f, 1 - drho**2, max_steps=6, stop_q=30)
    orders = [leading_order(vec_norm(evaluate(f, x))).exponent for x in res.iterates[:7]]
    first = next((n for n, o in enumerate(orders) if o >= 5), None)
    est = estimate_convergence_order(res.iterates, [1])["order"]
    oracle_ok = True
    for e in (1e-2, 1e-3, 1e-4):
        x = 1 - e * e
        for it in res.iterates:
            oracle_ok &= math.isclose(float(it[0].at(e)), x, rel_tol=1e-9)
            x = x - (1 - x * x) / (-2 * x)
    return [
        (f"residual order >= 5 by iteration {first}", first is not None and first <= 6),
        (f"convergence order {est:.4f} in [1.7, 2.3]", 1.7 <= est <= 2.3),
        ("iterates match double oracle at rel 1e-9", oracle_ok),
    ]


def criterion_3():
    report = cli.run(load_config(PROBLEMS / "example2_certify.toml"))
    cert = report.certificate or {}
    k_exp = cert.get("constants", {}).get("k", {}).get("order", {}).get("exponent", float("nan"))
    bis = _verdict_status(report.verdicts.get("10bisBI"))
    g = _gauge()
    drho = g.drho
    a, H = drho, drho**-3
    f = builtin("example2", {"a": a, "H": H}, g)
    res = newton_solve(f, a + a**2 * drho**3, max_steps=8, stop_q=5)
    root_order = leading_order(vec_norm(res.root - GenVec([a]))).exponent
    return [
        (f"k <= drho^R sampled-pass ({bis})", bis == PASS),
        (f"k exponent {k_exp:.4f} >= 0.95", k_exp >= 0.95),
        (f"|x* - a| order {root_order:.3f} >= 3", root_order >= 3),
    ]


def criterion_4():
    g = _gauge()
    f = builtin("ramp_mollified", gauge=g)
    e = 1e-3
    ramp_ok = all(
        math.isclose(float(f.at(e, [k * e / 6])[0]), mollified_ramp_oracle(k * e / 6, e), rel_tol=1e-6)
        for k in range(-5, 6)
    )
    report = cli.run(load_config(PROBLEMS / "example3_certify.toml"))
    bis = _verdict_status(report.verdicts.get("10bisBI"))
    inv = report.verdicts.get("invertibility") or {}
    w = inv.get("witness") or {}
    at_minus_drho = bool(w) and abs(w["x"][0] + w["eps"]) <= 1e-12 * w["eps"]
    return [
        ("ramp matches trapezoid convolution at 11 points (rel 1e-6)", ramp_ok),
        (f"k <= drho^R passes for R=1e-8 ({bis})", bis == PASS),
        ("invertibility failure flagged with witness", _verdict_status(inv) == FAIL and report.error is None),
        ("witness sits at x = -drho", at_minus_drho),
    ]


def _norm_axiom_violations(xv, yv):
    bad = 0
    for p, q in zip(xv, yv):
        ap, aq = abs(p), abs(q)
        tol = 2 * ULP
        bad += ap != max(p, -p)
        bad += ap < 0
        bad += (ap == 0) != (p == 0)
        bad += abs(abs(p * q) - ap * aq) > tol * ap * aq
        bad += abs(p + q) > (ap + aq) * (1 + tol)
        bad += abs(ap - aq) > abs(p - q) * (1 + tol)
    return bad


def criterion_5():
    g = _gauge()
    rng = np.random.default_rng(2024)
    violations = 0
    for _ in range(1000):
        x, y = random_gennum(g, rng), random_gennum(g, rng)
        violations += _norm_axiom_violations(x.tail(), y.tail())

    worst = 0.0
    for i in range(-10, 11):
        q = i / 2
        worst = max(worst, abs(leading_order(g.drho**q).exponent - q))

    rng = np.random.default_rng(99)
    division_ok, certified = True, 0
    for _ in range(100):
        x = power_net(g, rng.uniform(-5, 5), rng.uniform(-3, 3), rng.uniform(0, 0.9), rng.uniform(0.5, 3))
        if is_strictly_positive(x).verdict is Verdict.YES:
            certified += 1
            try:
                inv = ring_ops(GenNum.const(g, 1), x, "div")
                division_ok &= all(abs(v * w - 1) <= 4 * ULP for v, w in zip(inv.tail(), x.tail()))
            except GenfixError:
                division_ok = False
    return [
        (f"norm axioms on 1000 pairs: {violations} violations beyond 2 ulp", violations == 0),
        (f"leading_order on drho^q: max error {worst:.2e} <= 1e-9", worst <= 1e-9),
        (f"positivity certificate implies division ({certified}/100 certified)", division_ok and certified > 0),
    ]


def criterion_6():
    g = _gauge()
    drho = g.drho
    powers = sharp_converges([drho**n for n in range(8)], 0 * drho, [1, 2, 3])
    harmonic = sharp_converges([GenNum.const(g, 1 / n) for n in range(1, 30)], GenNum.const(g, 0), [1], start=1)
    half = verify_contraction_on_orbit(from_exprs(g, ["u1/2"], 1), 1, 6)
    cos = verify_contraction_on_orbit(from_exprs(g, ["drho*cos(u1)"], 1), 0, 6, box_domain(-2, 2))
    return [
        ("drho^n converges for q = 1, 2, 3", all(powers[q].passed for q in (1, 2, 3))),
        ("1/n does not converge for q = 1", not harmonic[1].passed),
        ("contraction rejects alpha = 1/2", half.strong_infinitesimal.verdict is Verdict.NO and not half.certified),
        ("contraction accepts drho*cos(x)", cos.certified),
    ]


def _random_unit_map(g, rng):
    """Polynomial self-map of [0,1]^2 with a small drho perturbation."""
    body = []
    for _ in range(2):
        c = rng.dirichlet(np.ones(6)) * 0.9
        p = rng.uniform(0.5, 3)
        body.append(
            f"{c[0]:.6f} + {c[1]:.6f}*u1 + {c[2]:.6f}*u2 + {c[3]:.6f}*u1*u2"
            f" + {c[4]:.6f}*u1^2 + {c[5]:.6f}*u2^2 + drho*sin({p:.4f}*u1 - u2)"
        )
    return from_exprs(g, body, 2)


def _residual(fbar, e, pt):
    val = fbar.at(e, list(pt))
    return _mp.mp(sum((v - x) ** 2 for v, x in zip(val, pt))) ** 0.5


def criterion_7():
    g = _gauge()
    rng = np.random.default_rng(11)
    worst = _mp.mp(0)
    solved = 0
    idempotent = True
    for _ in range(20):
        f = _random_unit_map(g, rng)
        try:
            res = brouwer_fixed_point(f, tol=1e-10, seed=0)
        except GenfixError:
            continue
        fbar = clamp_unit(f)
        pts = res.fixed_point.values(TAIL)
        worst = max(worst, max(_residual(fbar, float(e), pt) for e, pt in zip(TAIL, pts)))
        solved += 1
        # a map already valued in [0,1]^2 is unchanged by clamping, bitwise
        valid = from_exprs(g, [f"0.5*u1*u2 + {rng.uniform(0, 0.5):.6f}", f"u1^2*(1 - u2) + {rng.uniform(0, 0.1):.6f}*u2"], 2)
        e = np.full(8, float(TAIL[0]))
        xs = np.array([[_mp.mp(v) for v in rng.uniform(0, 1, 2)] for _ in range(8)], dtype=object)
        raw = valid.jet_eval(e, xs, 0)[0]
        once = clamp_unit(valid).jet_eval(e, xs, 0)[0]
        twice = clamp_unit(clamp_unit(valid)).jet_eval(e, xs, 0)[0]
        idempotent &= bool((raw == once).all() and (once == twice).all())
    return [
        (f"fixed point found for {solved}/20 maps", solved == 20),
        (f"max tail residual {float(worst):.2e} <= 1e-10", worst <= 1e-10),
        ("clamping is bitwise idempotent on valid maps", idempotent),
    ]


def criterion_8():
    round_trip = sum(parse(print_ast(parse(s))) == parse(s) for s in CORPUS)
    a, b, c = Param("a"), Param("b"), Param("c")
    precedence = [
        parse("a - b - c") == BinOp("-", BinOp("-", a, b), c),
        parse("a ^ b ^ c") == BinOp("^", a, BinOp("^", b, c)),
        parse("-u1^2") == Neg(BinOp("^", Var(1), Num("2"))),
        parse("a - -b") == BinOp("-", a, Neg(Param("b"))),
        parse("a^-b") == BinOp("^", a, Neg(b)),
        parse("a + b * c ^ a") == BinOp("+", a, BinOp("*", b, BinOp("^", c, a))),
    ]
    return [
        (f"round trip on {round_trip}/{len(CORPUS)} corpus expressions", round_trip == len(CORPUS) == 50),
        (f"precedence checks {sum(precedence)}/{len(precedence)}", all(precedence)),
    ]


def criterion_9(tmp_dir: Path):
    cfg = str(PROBLEMS / "example1_certify.toml")
    outs = []
    for i in range(2):
        c, j = tmp_dir / f"run{i}.csv", tmp_dir / f"run{i}.json"
        cli.main(["run", cfg, "--csv", str(c), "--json", str(j), "--quiet"])
        outs.append((c.read_bytes(), j.read_bytes()))
    return [
        ("CSV byte-identical", outs[0][0] == outs[1][0] and len(outs[0][0]) > 0),
        ("JSON byte-identical", outs[0][1] == outs[1][1] and len(outs[0][1]) > 0),
    ]


CRITERIA = {
    1: ("Example 1 certificate with the hand-derived constants", criterion_1),
    2: ("Newton on Example 1", criterion_2),
    3: ("Example 2 certificate and root", criterion_3),
    4: ("Mollified ramp and flagged invertibility", criterion_4),
    5: ("Invariant suites", criterion_5),
    6: ("Sharp-topology contracts", criterion_6),
    7: ("Brouwer fixed points", criterion_7),
    8: ("Parser", criterion_8),
    9: ("CLI determinism", criterion_9),
}


def evaluate_criterion(n: int, tmp_dir: Path) -> tuple[bool, str]:
    title, fn = CRITERIA[n]
    checks = fn(tmp_dir) if n == 9 else fn()
    ok = all(passed for _, passed in checks)
    detail = "; ".join(f"{'ok' if passed else 'FAILED'}: {name}" for name, passed in checks)
    return ok, f"criterion {n}: {'PASS' if ok else 'FAIL'} - {title} [{detail}]"


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, tmp_path):
    ok, line = evaluate_criterion(n, tmp_path)
    RESULTS.append(line)
    print(line)
    assert ok, line


if __name__ == "__main__":
    import tempfile

    failed = 0
    with tempfile.TemporaryDirectory() as d:
        for n in sorted(CRITERIA):
            ok, line = evaluate_criterion(n, Path(d))
            failed += not ok
            print(line, flush=True)
    sys.exit(1 if failed else 0)
