"""Problem configuration files (TOML) and their validation."""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import expr
from .errors import ConfigParseError, LexError, ParseError, ValidationError
from .gsf import BUILTINS

SOLVERS = ("newton", "banach", "brouwer", "certify", "classify")
_TOML_POS = re.compile(r"\(at line (\d+), column (\d+)\)")


@dataclass
class GridSpec:
    eps_max: float = 0.5
    eps_min: float = 1e-9
    count: int = 64
    tail_fraction: float = 0.25


@dataclass
class ProblemSpec:
    builtin: str | None = None
    body: list[str] = field(default_factory=list)
    dim: int = 1
    expr: str | None = None


@dataclass
class SolverSpec:
    kind: str = "newton"
    max_steps: int = 8
    stop_q: float = 5.0
    q_set: list[float] = field(default_factory=lambda: [1.0, 2.0, 3.0])
    pairs: int = 256
    seed: int = 0
    R: str | None = None
    tol: float = 1e-10
    max_restarts: int = 8
    steps: int = 6
    force: bool = False
    domain: list[float] | None = None
    invertibility: str = "raise"
    probes: list[str] = field(default_factory=list)
    root: list[str] | None = None


@dataclass
class OutputSpec:
    csv: str | None = None
    json: str | None = None


@dataclass
class RunConfig:
    gauge: str = "eps"
    grid: GridSpec = field(default_factory=GridSpec)
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    params: dict[str, str] = field(default_factory=dict)
    x0: list[str] = field(default_factory=list)
    r: str | None = None
    solver: SolverSpec = field(default_factory=SolverSpec)
    constants: dict[str, str] = field(default_factory=dict)
    output: OutputSpec = field(default_factory=OutputSpec)

    @property
    def dim(self) -> int:
        return self.problem.dim

    def echo(self) -> dict:
        """A plain dict that :func:`from_dict` turns back into an equal config."""
        d = asdict(self)
        return _drop_none(d)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return _build(data, source="<dict>")


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d


# --------------------------------------------------------------------------
# loading


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigParseError(f"{path}: not valid UTF-8 ({exc})", key="", position=exc.start) from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        pos = None
        if getattr(exc, "lineno", None) is not None:
            pos = (exc.lineno, exc.colno)
        elif m := _TOML_POS.search(str(exc)):
            pos = (int(m.group(1)), int(m.group(2)))
        raise ConfigParseError(f"{path}: {exc}", key="", position=pos) from exc
    return _build(_from_toml(data), source=str(path))


def _from_toml(data: dict) -> dict:
    """Map the sectioned file layout onto RunConfig fields."""
    known = {"gauge", "grid", "problem", "params", "start", "solver", "constants", "output"}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown section(s): {', '.join(sorted(unknown))}")
    out = {}
    gauge = data.get("gauge", {})
    if isinstance(gauge, str):
        out["gauge"] = gauge
    elif gauge:
        out["gauge"] = gauge.get("spec", "eps")
    for key in ("grid", "problem", "params", "solver", "constants", "output"):
        if key in data:
            out[key] = data[key]
    start = data.get("start", {})
    if "x0" in start:
        out["x0"] = start["x0"]
    if "r" in start:
        out["r"] = start["r"]
    return out


def _typed(section: str, cls, values: dict):
    if not isinstance(values, dict):
        raise ConfigParseError(f"[{section}] must be a table", key=section, position=None)
    names = set(cls.__dataclass_fields__)
    unknown = set(values) - names
    if unknown:
        raise ValidationError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}", key=section)
    try:
        return cls(**values)
    except TypeError as exc:
        raise ValidationError(f"[{section}]: {exc}", key=section) from exc


def _check_expr(text, key: str):
    if not isinstance(text, str):
        raise ConfigParseError(f"{key}: expected a quoted DSL expression", key=key, position=None)
    try:
        return expr.parse(expr.tokenize(text))
    except (LexError, ParseError) as exc:
        raise ConfigParseError(f"{key}: {exc}", key=key, position=exc.position) from exc


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _build(data: dict, source: str) -> RunConfig:
    grid = _typed("grid", GridSpec, data.get("grid", {}))
    problem = _typed("problem", ProblemSpec, data.get("problem", {}))
    solver = _typed("solver", SolverSpec, data.get("solver", {}))
    output = _typed("output", OutputSpec, data.get("output", {}))
    for name in ("q_set",):
        setattr(solver, name, [float(q) for q in getattr(solver, name)])
    solver.stop_q = float(solver.stop_q)
    if solver.R is not None:
        solver.R = str(solver.R)
    if solver.domain is not None:
        solver.domain = [float(v) for v in solver.domain]
    problem.body = [str(b) for b in _as_list(problem.body)] if problem.body else []
    params = {str(k): str(v) for k, v in dict(data.get("params", {})).items()}
    constants = {str(k): str(v) for k, v in dict(data.get("constants", {})).items()}
    x0 = [str(v) for v in _as_list(data["x0"])] if "x0" in data else []
    cfg = RunConfig(
        gauge=str(data.get("gauge", "eps")),
        grid=grid,
        problem=problem,
        params=params,
        x0=x0,
        r=str(data["r"]) if data.get("r") is not None else None,
        solver=solver,
        constants=constants,
        output=output,
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    s = cfg.solver
    if s.kind not in SOLVERS:
        raise ValidationError(f"unknown solver {s.kind!r}; expected one of {', '.join(SOLVERS)}", key="solver.kind")
    p = cfg.problem
    for name, text in cfg.params.items():
        if not expr.valid_param_name(name):
            raise ValidationError(f"invalid parameter name {name!r}", key=f"params.{name}")
        _check_expr(text, f"params.{name}")
    if s.kind == "classify":
        if p.expr is None:
            raise ValidationError("classify needs problem.expr", key="problem.expr")
        _check_expr(p.expr, "problem.expr")
        return
    if p.builtin is not None and p.body:
        raise ValidationError("give either problem.builtin or problem.body, not both", key="problem")
    if p.builtin is not None:
        if p.builtin not in BUILTINS:
            raise ValidationError(f"unknown builtin {p.builtin!r}", key="problem.builtin")
        if p.dim != 1:
            raise ValidationError("builtin examples are one-dimensional", key="problem.dim")
    elif p.body:
        if len(p.body) != p.dim and s.kind != "classify":
            raise ValidationError(
                f"problem.body has {len(p.body)} components but dim = {p.dim}", key="problem.body"
            )
        for i, b in enumerate(p.body):
            ast = _check_expr(b, f"problem.body[{i}]")
            if expr.max_var(ast) > p.dim:
                raise ValidationError(f"problem.body[{i}] uses u{expr.max_var(ast)} beyond dim {p.dim}", key=f"problem.body[{i}]")
    else:
        raise ValidationError("problem needs a builtin or a body", key="problem")
    if p.dim < 1:
        raise ValidationError("problem.dim must be positive", key="problem.dim")
    if s.kind == "brouwer" and p.dim > 3:
        raise ValidationError(f"brouwer supports d <= 3, got {p.dim}", key="problem.dim")
    if s.kind != "brouwer":
        if not cfg.x0:
            raise ValidationError("start.x0 is required", key="start.x0")
        if len(cfg.x0) != p.dim:
            raise ValidationError(f"start.x0 has {len(cfg.x0)} components, problem has dim {p.dim}", key="start.x0")
        for i, t in enumerate(cfg.x0):
            _check_expr(t, f"start.x0[{i}]")
    if s.kind == "certify":
        if cfg.r is None:
            raise ValidationError("certify needs start.r", key="start.r")
        _check_expr(cfg.r, "start.r")
        given = set(cfg.constants)
        if given and given != {"M", "N", "k"}:
            raise ValidationError("constants must give all of M, N, k (or none)", key="constants")
        for name, text in cfg.constants.items():
            _check_expr(text, f"constants.{name}")
        if s.invertibility not in ("raise", "flag"):
            raise ValidationError("solver.invertibility must be 'raise' or 'flag'", key="solver.invertibility")
        for i, t in enumerate(s.probes):
            _check_expr(t, f"solver.probes[{i}]")
    if s.root is not None:
        if len(s.root) != p.dim:
            raise ValidationError("solver.root must match the problem dimension", key="solver.root")
        for i, t in enumerate(s.root):
            _check_expr(t, f"solver.root[{i}]")
