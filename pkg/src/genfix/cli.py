"""Command-line front end: ``genfix run | classify | parse``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import _mp, expr, gsf, solvers
from .config import RunConfig, load_config
from .errors import GenfixError, InsufficientData, NoFixedPointFound, NoSharpConvergence
from .gauge_ring import EpsGrid, Kind, classify, make_gauge, order_or_none
from .gen_linalg import GenVec, vec_norm

EXIT_OK, EXIT_ERROR, EXIT_FAIL, EXIT_UNDECIDED = 0, 1, 2, 3
PASS, FAIL, UNDECIDED = solvers.PASS, solvers.FAIL, solvers.UNDECIDED
SCHEMA = "1"


@dataclass
class SolveReport:
    config: dict
    command: str
    verdicts: dict = field(default_factory=dict)
    iterations: list = field(default_factory=list)
    certificate: dict | None = None
    result: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    error: str | None = None
    wall_time: float = 0.0
    status: int = EXIT_OK
    # per-row CSV data, kept out of the JSON document
    rows: list = field(default_factory=list, repr=False)
    resid_column: str = "abs_f"
    dim: int = 1

    def finalize(self) -> "SolveReport":
        if self.error is not None:
            self.status = EXIT_ERROR
            return self
        vals = [v["status"] if isinstance(v, dict) else v for v in self.verdicts.values()]
        if FAIL in vals:
            self.status = EXIT_FAIL
        elif UNDECIDED in vals:
            self.status = EXIT_UNDECIDED
        else:
            self.status = EXIT_OK
        return self

    def as_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "command": self.command,
            "status": self.status,
            "verdicts": self.verdicts,
            "result": self.result,
            "iterations": self.iterations,
            "certificate": self.certificate,
            "notes": self.notes,
            "error": self.error,
            "config": self.config,
        }


# --------------------------------------------------------------------------
# building the problem


class _Problem:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        g = cfg.grid
        self.grid = EpsGrid(g.eps_max, g.eps_min, g.count, g.tail_fraction)
        self.gauge = make_gauge(cfg.gauge, self.grid)
        env = expr.ParamEnv(self.gauge, dim=cfg.dim)
        for name, text in cfg.params.items():
            env = env.extended(**{name: expr.eval_ast(expr.parse(text), env)})
        self.env = env

    def number(self, text: str, env=None):
        return expr.eval_ast(expr.parse(text), env or self.env)

    def vec(self, texts) -> GenVec:
        return GenVec([self.number(t) for t in texts])

    def function(self) -> gsf.GenFunc:
        p = self.cfg.problem
        if p.builtin is not None:
            params = {name: self.env[name] for name in self.env.names()}
            return gsf.builtin(p.builtin, params, gauge=self.gauge)
        return gsf.from_exprs(self.gauge, p.body, p.dim, env=self.env)


def _fmt(x) -> str:
    return _mp.fmt(x, 17)


def _iteration_table(report: SolveReport, prob: _Problem, points: list, resid_of) -> None:
    """Fill the representative-eps table and the CSV rows for a list of iterates."""
    grid = prob.grid
    rep_idx = set(grid.representative_indices)
    for n, x in enumerate(points):
        resid = resid_of(x)
        fit = order_or_none(resid, grid)
        order = fit.exponent if fit else None
        entry = {"n": n, "resid_order": order, "representative": []}
        for i, e in enumerate(grid.samples):
            try:
                xs = x.values([e])[0]
                rv = resid.at(e)
                cells = [_fmt(v) for v in xs] + [_fmt(rv)]
            except GenfixError:
                cells = ["nan"] * (x.dim + 1)
            rho = prob.gauge.rho([e])[0]
            report.rows.append([str(n), repr(float(e)), _fmt(rho)] + cells + ["" if order is None else repr(order)])
            if i in rep_idx:
                entry["representative"].append({"eps": float(e), "x": cells[:-1], "resid": cells[-1]})
        report.iterations.append(entry)


def _residual_f(f):
    return lambda x: vec_norm(gsf.evaluate(f, x))


def _residual_g(g):
    return lambda x: vec_norm(gsf.evaluate(g, x) - x)


# --------------------------------------------------------------------------
# solvers


def _run_classify(prob: _Problem, report: SolveReport):
    x = prob.number(prob.cfg.problem.expr)
    c = classify(x, prob.grid)
    report.result = c.as_dict()
    report.verdicts["classified"] = UNDECIDED if c.kind is Kind.INDETERMINATE else PASS
    report.resid_column = "abs_x"
    _iteration_table(report, prob, [GenVec([x])], lambda v: abs(v[0]))


def _run_newton(prob: _Problem, report: SolveReport):
    s = prob.cfg.solver
    f = prob.function()
    x0 = prob.vec(prob.cfg.x0)
    res = solvers.newton_solve(f, x0, max_steps=s.max_steps, stop_q=s.stop_q, grid=prob.grid)
    report.verdicts["df_invertible"] = PASS
    report.verdicts["converged"] = PASS if res.converged else FAIL
    root = prob.vec(s.root) if s.root else res.root
    try:
        est = solvers.estimate_convergence_order(res.iterates, root, prob.grid)
        report.result["convergence_order"] = est["order"]
        report.result["constant_order"] = est["constant_order"].as_dict()
        report.verdicts["quadratic"] = PASS if est["order"] >= 1.7 else FAIL
    except InsufficientData as exc:
        report.notes.append(f"convergence order not estimated: {exc}")
    report.result["newton"] = res.as_dict()
    _iteration_table(report, prob, res.iterates, _residual_f(f))


def _run_banach(prob: _Problem, report: SolveReport):
    s = prob.cfg.solver
    g = prob.function()
    x0 = prob.vec(prob.cfg.x0)
    dom = solvers.box_domain(*s.domain) if s.domain else None
    report.resid_column = "abs_g_minus_x"
    try:
        contraction = solvers.verify_contraction_on_orbit(g, x0, max(s.steps, 3), dom, prob.grid)
    except solvers.DegenerateOrbit:
        report.verdicts["strong_infinitesimal"] = PASS
        report.notes.append("g(x0) = x0: x0 is the fixed point")
        _iteration_table(report, prob, [x0], _residual_g(g))
        return
    report.result["contraction"] = contraction.as_dict()
    si = contraction.strong_infinitesimal
    report.verdicts["strong_infinitesimal"] = {
        "certified_yes": PASS, "certified_no": FAIL, "undecided": UNDECIDED
    }[si.verdict.value]
    if not contraction.certified and not s.force:
        _iteration_table(report, prob, contraction.orbit, _residual_g(g))
        return
    try:
        res = solvers.banach_solve(g, x0, s.q_set, s.max_steps, dom, force=s.force, grid=prob.grid)
    except NoSharpConvergence as exc:
        report.verdicts["sharp_convergence"] = FAIL
        report.notes.append(str(exc))
        _iteration_table(report, prob, exc.orbit, _residual_g(g))
        return
    if res.forced:
        report.notes.append("contraction not certified; iteration forced")
    report.result["banach"] = res.as_dict()
    report.verdicts["sharp_convergence"] = PASS if all(r.passed for r in res.cauchy_report.values()) else FAIL
    _iteration_table(report, prob, res.orbit, _residual_g(g))


def _run_brouwer(prob: _Problem, report: SolveReport):
    s = prob.cfg.solver
    f = prob.function()
    report.resid_column = "abs_g_minus_x"
    try:
        res = solvers.brouwer_fixed_point(f, s.tol, s.max_restarts, s.seed, prob.grid)
    except NoFixedPointFound as exc:
        report.verdicts["fixed_point"] = FAIL
        report.notes.append(str(exc))
        return
    report.verdicts["fixed_point"] = PASS if res.per_eps_residual <= s.tol else FAIL
    report.result["brouwer"] = res.as_dict()
    fbar = gsf.clamp_unit(f)
    _iteration_table(report, prob, [res.fixed_point], _residual_g(fbar))


def _run_certify(prob: _Problem, report: SolveReport):
    cfg = prob.cfg
    s = cfg.solver
    f = prob.function()
    x0 = prob.vec(cfg.x0)
    r = prob.number(cfg.r)
    constants = None
    if cfg.constants:
        extra = {"r": r}
        if cfg.dim == 1:
            extra["x0"] = x0[0]
        else:
            extra.update({f"x0_{i + 1}": c for i, c in enumerate(x0)})
        env = prob.env.extended(**{k: v for k, v in extra.items() if k not in prob.env})
        constants = {name: prob.number(text, env) for name, text in cfg.constants.items()}
    R = Fraction(s.R) if s.R is not None else None
    probes = [prob.vec([p] if isinstance(p, str) else p) for p in s.probes]
    cert = solvers.certify_ben_israel(
        f, x0, r, constants, pairs=s.pairs, seed=s.seed, R=R, grid=prob.grid,
        invertibility=s.invertibility, probe_points=probes,
    )
    report.verdicts = {name: v.as_dict() for name, v in cert.verdicts.items()}
    if cert.invertibility is not None:
        report.verdicts["invertibility"] = cert.invertibility.as_dict()
    report.certificate = cert.as_dict(prob.grid)
    report.notes.extend(cert.notes)
    _iteration_table(report, prob, [x0], _residual_f(f))


_DISPATCH = {
    "classify": _run_classify,
    "newton": _run_newton,
    "banach": _run_banach,
    "brouwer": _run_brouwer,
    "certify": _run_certify,
}


def run(cfg: RunConfig) -> SolveReport:
    report = SolveReport(config=cfg.echo(), command=cfg.solver.kind, dim=cfg.dim)
    start = time.perf_counter()
    try:
        prob = _Problem(cfg)
        _DISPATCH[cfg.solver.kind](prob, report)
    except GenfixError as exc:
        report.error = f"{type(exc).__name__}: {exc}"
    report.wall_time = time.perf_counter() - start
    return report.finalize()


# --------------------------------------------------------------------------
# output


def csv_header(dim: int, resid_column: str = "abs_f") -> list[str]:
    return ["n", "eps", "rho"] + [f"x{i + 1}" for i in range(dim)] + [resid_column, "resid_order"]


def emit_csv(report: SolveReport, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(report.dim, report.resid_column))
    w.writerows(report.rows)
    Path(path).write_bytes(buf.getvalue().encode("utf-8"))


def report_json(report: SolveReport) -> str:
    return json.dumps(report.as_dict(), indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, Fraction):
        return str(o)
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    return str(o)


def emit_report(report: SolveReport, path) -> None:
    Path(path).write_bytes(report_json(report).encode("utf-8"))


def _short(cell: str) -> str:
    try:
        return f"{float(cell):.10g}"
    except ValueError:
        return cell


def _print_human(report: SolveReport, out) -> None:
    print(f"command: {report.command}", file=out)
    for name, v in report.verdicts.items():
        status = v["status"] if isinstance(v, dict) else v
        line = f"  {name}: {status}"
        if isinstance(v, dict) and v.get("witness"):
            line += f"  witness={v['witness']}"
        print(line, file=out)
    for key, value in report.result.items():
        if not isinstance(value, dict):
            print(f"  {key}: {value}", file=out)
    if report.iterations:
        print("  n  resid_order  representative values", file=out)
        for it in report.iterations:
            order = "-" if it["resid_order"] is None else f"{it['resid_order']:.4g}"
            reps = "  ".join(f"{r['eps']:.3g}:{_short(r['x'][0])}" for r in it["representative"])
            print(f"  {it['n']:<2} {order:<12} {reps}", file=out)
    for note in report.notes:
        print(f"  note: {note}", file=out)
    if report.error:
        print(f"  error: {report.error}", file=out)
    print(f"status: {report.status}  wall time: {report.wall_time:.3f} s", file=out)


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="genfix", description="Generalized numbers and fixed-point solvers.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a problem config")
    r.add_argument("config")
    r.add_argument("--csv")
    r.add_argument("--json")
    r.add_argument("--grid-count", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--quiet", action="store_true")
    c = sub.add_parser("classify", help="classify a generalized number")
    c.add_argument("expr")
    c.add_argument("--gauge", default="eps")
    c.add_argument("--json")
    p = sub.add_parser("parse", help="print the canonical AST")
    p.add_argument("expr")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "parse":
        try:
            print(expr.print_ast(expr.parse(args.expr)))
        except GenfixError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        return EXIT_OK
    if args.cmd == "classify":
        cfg = RunConfig.from_dict({"gauge": args.gauge, "problem": {"expr": args.expr}, "solver": {"kind": "classify"}})
        report = run(cfg)
        print(json.dumps({"kind": report.result.get("kind"), **report.result}, default=_json_default))
        if report.error:
            print(f"error: {report.error}", file=sys.stderr)
        if args.json:
            emit_report(report, args.json)
        return report.status
    try:
        cfg = load_config(args.config)
    except (GenfixError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.grid_count is not None:
        cfg.grid.count = args.grid_count
    if args.seed is not None:
        cfg.solver.seed = args.seed
    report = run(cfg)
    csv_path = args.csv or cfg.output.csv
    json_path = args.json or cfg.output.json
    try:
        if csv_path:
            emit_csv(report, csv_path)
        if json_path:
            emit_report(report, json_path)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if not args.quiet:
        _print_human(report, sys.stdout)
    return report.status


if __name__ == "__main__":
    sys.exit(main())
