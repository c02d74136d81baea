"""The problem-definition DSL: tokenizer, recursive-descent parser, printer, evaluator.

Grammar (right-associative ``^``; unary minus binds looser than ``^``)::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-" factor | power
    power  := atom ("^" factor)?
    atom   := number | "drho" | "eps" | name | name "(" expr ("," expr)* ")" | "(" expr ")"

Names ``u1 .. un`` are the point coordinates, every other plain name is a
parameter bound in a :class:`ParamEnv`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _mp, jets
from .errors import DomainViolation, LexError, ParseError, UnboundName
from .gauge_ring import Gauge, GenNum

FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "abs": 1,
    "min": 2,
    "max": 2,
    "ramp": 1,
}
KEYWORDS = {"drho", "eps"}
_VAR_RE = re.compile(r"u([1-9][0-9]*)\Z")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


# --------------------------------------------------------------------------
# tokens


@dataclass(frozen=True)
class Token:
    kind: str  # number | identifier | operator | lparen | rparen | comma | end
    text: str
    position: int  # byte offset into the UTF-8 source


_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)"
    r"|(?P<identifier>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<operator>[-+*/^])"
    r"|(?P<lparen>\()"
    r"|(?P<rparen>\))"
    r"|(?P<comma>,)"
)


def tokenize(src: str) -> list[Token]:
    tokens = []
    pos = 0
    byte = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise LexError(f"illegal character {src[pos]!r}", byte)
        text = m.group()
        if m.lastgroup != "ws":
            tokens.append(Token(m.lastgroup, text, byte))
        pos = m.end()
        byte += len(text.encode("utf-8"))
    return tokens


# --------------------------------------------------------------------------
# syntax tree; spans are excluded from equality so == is structural


@dataclass(frozen=True)
class Num:
    text: str
    span: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Var:
    index: int
    span: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Param:
    name: str
    span: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Drho:
    span: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Eps:
    span: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Neg:
    operand: object
    span: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object
    span: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    span: tuple[int, int] = field(default=(0, 0), compare=False)


Ast = Num | Var | Param | Drho | Eps | Neg | BinOp | Call


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = list(tokens)
        end = 0
        if self.tokens:
            last = self.tokens[-1]
            end = last.position + len(last.text.encode("utf-8"))
        self.tokens.append(Token("end", "", end))
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, kind: str, text: str | None, expected: str) -> Token:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            raise ParseError(f"unexpected {_describe(t)}", t.position, (expected,))
        return self.advance()

    def parse(self):
        if self.tok.kind == "end":
            raise ParseError("empty expression", self.tok.position, ("expression",))
        node = self.expr()
        if self.tok.kind != "end":
            raise ParseError(
                f"unexpected {_describe(self.tok)}",
                self.tok.position,
                ('"+"', '"-"', '"*"', '"/"', '"^"', "end of input"),
            )
        return node

    def expr(self):
        left = self.term()
        while self.tok.kind == "operator" and self.tok.text in "+-":
            op = self.advance().text
            right = self.term()
            left = BinOp(op, left, right, (left.span[0], right.span[1]))
        return left

    def term(self):
        left = self.factor()
        while self.tok.kind == "operator" and self.tok.text in "*/":
            op = self.advance().text
            right = self.factor()
            left = BinOp(op, left, right, (left.span[0], right.span[1]))
        return left

    def factor(self):
        if self.tok.kind == "operator" and self.tok.text == "-":
            start = self.advance().position
            operand = self.factor()
            return Neg(operand, (start, operand.span[1]))
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "operator" and self.tok.text == "^":
            self.advance()
            exponent = self.factor()
            return BinOp("^", base, exponent, (base.span[0], exponent.span[1]))
        return base

    def atom(self):
        t = self.tok
        span = (t.position, t.position + len(t.text.encode("utf-8")))
        if t.kind == "number":
            self.advance()
            return Num(t.text, span)
        if t.kind == "lparen":
            self.advance()
            inner = self.expr()
            close = self.expect("rparen", None, '")"')
            return _respan(inner, (t.position, close.position + 1))
        if t.kind == "identifier":
            self.advance()
            name = t.text
            if self.tok.kind == "lparen":
                if name not in FUNCTIONS:
                    raise ParseError(f"unknown function {name!r}", t.position, tuple(sorted(FUNCTIONS)))
                self.advance()
                args = [self.expr()]
                while self.tok.kind == "comma":
                    self.advance()
                    args.append(self.expr())
                close = self.expect("rparen", None, '")"')
                if len(args) != FUNCTIONS[name]:
                    raise ParseError(
                        f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}",
                        t.position,
                        (f"{FUNCTIONS[name]} argument(s)",),
                    )
                return Call(name, tuple(args), (t.position, close.position + 1))
            if name in FUNCTIONS:
                raise ParseError(f"function {name!r} used without arguments", self.tok.position, ('"("',))
            if name == "drho":
                return Drho(span)
            if name == "eps":
                return Eps(span)
            m = _VAR_RE.match(name)
            if m:
                return Var(int(m.group(1)), span)
            return Param(name, span)
        raise ParseError(
            f"unexpected {_describe(t)}", t.position, ("number", "name", '"("', '"-"')
        )


def _describe(t: Token) -> str:
    return "end of input" if t.kind == "end" else f"{t.kind} {t.text!r}"


def _respan(node, span):
    # parenthesized subexpressions keep their structure; only the span widens
    return type(node)(**{**node.__dict__, "span": span})


def parse(tokens) -> Ast:
    """Parse a token list (or a source string) into an AST."""
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    return _Parser(tokens).parse()


def print_ast(node) -> str:
    if isinstance(node, Num):
        return node.text
    if isinstance(node, Var):
        return f"u{node.index}"
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Drho):
        return "drho"
    if isinstance(node, Eps):
        return "eps"
    if isinstance(node, Neg):
        return f"(-{print_ast(node.operand)})"
    if isinstance(node, BinOp):
        return f"({print_ast(node.left)} {node.op} {print_ast(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(print_ast(a) for a in node.args)})"
    raise TypeError(f"not an AST node: {node!r}")


def walk(node) -> Iterable:
    yield node
    if isinstance(node, Neg):
        yield from walk(node.operand)
    elif isinstance(node, BinOp):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, Call):
        for a in node.args:
            yield from walk(a)


def free_names(node) -> set[str]:
    names = set()
    for n in walk(node):
        if isinstance(n, Param):
            names.add(n.name)
        elif isinstance(n, Var):
            names.add(f"u{n.index}")
        elif isinstance(n, Drho):
            names.add("drho")
        elif isinstance(n, Eps):
            names.add("eps")
    return names


def params_of(node) -> set[str]:
    return {n.name for n in walk(node) if isinstance(n, Param)}


def max_var(node) -> int:
    return max((n.index for n in walk(node) if isinstance(n, Var)), default=0)


# --------------------------------------------------------------------------
# evaluation


def valid_param_name(name: str) -> bool:
    return bool(_IDENT_RE.match(name)) and name not in KEYWORDS and name not in FUNCTIONS and not _VAR_RE.match(name)


class ParamEnv:
    """Named GenNum bindings plus the declared domain dimension."""

    def __init__(self, gauge: Gauge, bindings=None, dim: int = 0):
        self.gauge = gauge
        self.dim = dim
        self._bindings: dict[str, GenNum] = {}
        items = bindings.items() if isinstance(bindings, dict) else (bindings or [])
        for name, value in items:
            self._bind(name, value)

    def _bind(self, name, value):
        if not valid_param_name(name):
            raise ValueError(f"invalid parameter name {name!r}")
        if name in self._bindings:
            raise ValueError(f"duplicate parameter {name!r}")
        if not isinstance(value, GenNum):
            value = GenNum.const(self.gauge, value)
        self._bindings[name] = value

    def __contains__(self, name):
        return name in self._bindings

    def __getitem__(self, name) -> GenNum:
        try:
            return self._bindings[name]
        except KeyError:
            raise UnboundName(f"parameter {name!r} is not bound", name=name) from None

    def names(self) -> list[str]:
        return list(self._bindings)

    def extended(self, **more) -> "ParamEnv":
        env = ParamEnv(self.gauge, dict(self._bindings), self.dim)
        for k, v in more.items():
            env._bind(k, v)
        return env


class Evaluator:
    """Evaluate an AST on a batch of eps samples, over arrays or jets."""

    def __init__(self, eps: np.ndarray, inputs=(), params=None, rho=None):
        self.eps = eps
        self.m = len(eps)
        self.inputs = list(inputs)
        self.params = params or {}
        self.rho = rho

    def _violation(self, mask, message):
        idx = int(np.flatnonzero(mask)[0])
        raise DomainViolation(f"{message} at eps={float(self.eps[idx])!r}", eps=float(self.eps[idx]))

    def run(self, node):
        if isinstance(node, Num):
            return _mp.full(self.m, node.text)
        if isinstance(node, Drho):
            if self.rho is None:
                raise UnboundName("drho is not available here", name="drho")
            return self.rho
        if isinstance(node, Eps):
            return _mp.as_mp_array(self.eps)
        if isinstance(node, Var):
            if node.index > len(self.inputs):
                raise UnboundName(f"u{node.index} is outside the declared dimension {len(self.inputs)}", name=f"u{node.index}")
            return self.inputs[node.index - 1]
        if isinstance(node, Param):
            if node.name not in self.params:
                raise UnboundName(f"parameter {node.name!r} is not bound", name=node.name)
            return self.params[node.name]
        if isinstance(node, Neg):
            return jets.neg(self.run(node.operand))
        if isinstance(node, BinOp):
            a = self.run(node.left)
            b = self.run(node.right)
            if node.op == "+":
                return jets.add(a, b)
            if node.op == "-":
                return jets.sub(a, b)
            if node.op == "*":
                return jets.mul(a, b)
            if node.op == "/":
                vb = jets.value(b)
                bad = np.array([v == 0 for v in vb])
                if bad.any():
                    self._violation(bad, "division by zero")
                return jets.div(a, b)
            return self._power(a, b)
        if isinstance(node, Call):
            args = [self.run(x) for x in node.args]
            return self._call(node.name, args)
        raise TypeError(f"not an AST node: {node!r}")

    def _power(self, a, b):
        va = jets.value(a)
        if isinstance(b, jets.Jet):
            bad = np.array([v <= 0 for v in va])
            if bad.any():
                self._violation(bad, "variable exponent needs a positive base")
            return jets.power(a, b)
        bad_frac = np.array([x < 0 and not jets._is_int(p) for x, p in zip(va, b)])
        if bad_frac.any():
            self._violation(bad_frac, "non-integer power of a negative value")
        bad_zero = np.array([x == 0 and p < 0 for x, p in zip(va, b)])
        if bad_zero.any():
            self._violation(bad_zero, "negative power of zero")
        return jets.power_const(a, b)

    def _call(self, name, args):
        a = args[0]
        va = jets.value(a)
        if name == "log":
            bad = np.array([v <= 0 for v in va])
            if bad.any():
                self._violation(bad, "log of a nonpositive value")
            return jets.log(a)
        if name == "sqrt":
            bad = np.array([v < 0 for v in va])
            if bad.any():
                self._violation(bad, "sqrt of a negative value")
            return jets.sqrt(a)
        if name == "min":
            return jets.minimum(args[0], args[1])
        if name == "max":
            return jets.maximum(args[0], args[1])
        fn = {"sin": jets.sin, "cos": jets.cos, "exp": jets.exp, "abs": jets.absolute, "ramp": jets.ramp}[name]
        return fn(a)


def evaluate_raw(node, eps: np.ndarray) -> np.ndarray:
    """Evaluate an expression of ``eps`` alone (used to define gauges)."""
    return Evaluator(np.asarray(eps, dtype=float)).run(node)


def eval_ast(node, env: ParamEnv, point=None) -> GenNum:
    """The generalized number obtained by evaluating ``node`` per eps."""
    needed = params_of(node)
    for name in needed:
        env[name]  # raises UnboundName early
    nvar = max_var(node)
    comps = []
    if nvar:
        if point is None:
            raise UnboundName(f"u{nvar} needs a point", name=f"u{nvar}")
        comps = list(point.components) if hasattr(point, "components") else list(point)
        if nvar > len(comps):
            raise UnboundName(f"u{nvar} exceeds the point dimension {len(comps)}", name=f"u{nvar}")
    gauge = env.gauge
    bound = {name: env[name] for name in needed}

    def net(e):
        ev = Evaluator(
            e,
            inputs=[c.values(e) for c in comps],
            params={k: v.values(e) for k, v in bound.items()},
            rho=gauge.rho(e),
        )
        return ev.run(node)

    return GenNum(gauge, net, label=print_ast(node))


def number(src: str, env: ParamEnv) -> GenNum:
    """Parse and evaluate a closed expression (no point variables)."""
    return eval_ast(parse(tokenize(src)), env)
