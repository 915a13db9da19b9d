"""Parser and vectorised evaluator for the component-expression language.

A source file holds one definition per line::

    # comment
    states: 2          # optional, defaults to the number of components
    inputs: 1          # optional, defaults to 1 + highest u-index used
    f0 = x1
    f1 = -sin(x0) + u0

Grammar (``^`` binds tightest and is right-associative, unary minus sits
between ``^`` and the multiplicative operators)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'pi' | VAR | FUNC '(' expr ')' | '(' expr ')'
    VAR    := 'x' DIGITS | 'u' DIGITS
    FUNC   := sin | cos | exp | sqrt | abs | sign | acos
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..errors import ArityMismatch, DomainError, ParseError, UnknownIdentifier

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs", "sign", "acos")
ACOS_CLAMP = 1e-12


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "u"
    index: int


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or a name from FUNCTIONS
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Var, Unary, Binary]


@dataclass(frozen=True)
class ParsedSource:
    components: tuple[Expr, ...]
    n: int
    m: int


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()=:])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    col: int  # 1-based


def _tokenize(text: str, line: int, start: int = 0) -> list[_Tok]:
    out, pos = [], start
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if mt is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos + 1)
        kind = mt.lastgroup
        if kind != "ws":
            out.append(_Tok(kind, mt.group(), pos + 1))
        pos = mt.end()
    return out


class _LineParser:
    def __init__(self, tokens: list[_Tok], line: int, end_col: int):
        self.toks = tokens
        self.i = 0
        self.line = line
        self.end_col = end_col

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, msg: str, tok: _Tok | None = None):
        col = tok.col if tok is not None else self.end_col
        raise ParseError(msg, self.line, col)

    def expect(self, text: str) -> _Tok:
        tok = self.peek()
        if tok is None or tok.text != text:
            self.fail(f"expected {text!r}", tok if tok is not None else self._last())
        return self.take()

    def _last(self) -> _Tok | None:
        return self.toks[self.i - 1] if self.i > 0 else None

    def expr(self) -> Expr:
        node = self.term()
        while (tok := self.peek()) is not None and tok.text in ("+", "-"):
            self.take()
            node = Binary(tok.text, node, self.operand(tok, self.term))
        return node

    def term(self) -> Expr:
        node = self.unary()
        while (tok := self.peek()) is not None and tok.text in ("*", "/"):
            self.take()
            node = Binary(tok.text, node, self.operand(tok, self.unary))
        return node

    def unary(self) -> Expr:
        tok = self.peek()
        if tok is not None and tok.text in ("-", "+"):
            self.take()
            arg = self.operand(tok, self.unary)
            return Unary("neg", arg) if tok.text == "-" else arg
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok is not None and tok.text == "^":
            self.take()
            return Binary("^", base, self.operand(tok, self.unary))
        return base

    def operand(self, op_tok: _Tok, rule):
        # a missing operand is reported at the operator that needed it
        if self.peek() is None:
            self.fail(f"missing operand after {op_tok.text!r}", op_tok)
        return rule()

    def atom(self) -> Expr:
        tok = self.peek()
        if tok is None:
            self.fail("unexpected end of line", self._last())
        if tok.kind == "num":
            self.take()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.take()
            return self.named(tok)
        if tok.text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        self.fail(f"unexpected {tok.text!r}", tok)

    def named(self, tok: _Tok) -> Expr:
        name = tok.text
        if name in FUNCTIONS:
            nxt = self.peek()
            if nxt is None or nxt.text != "(":
                self.fail(f"function {name!r} needs a parenthesised argument", nxt or tok)
            self.take()
            arg = self.expr()
            self.expect(")")
            return Unary(name, arg)
        if name == "pi":
            return Num(math.pi)
        mt = re.fullmatch(r"([xu])(\d+)", name)
        if mt is None:
            raise UnknownIdentifier(f"unknown identifier {name!r}", self.line, tok.col)
        return Var(mt.group(1), int(mt.group(2)))


def parse_expression(text: str, line: int = 1) -> Expr:
    tokens = _tokenize(text, line)
    parser = _LineParser(tokens, line, len(text) + 1)
    if not tokens:
        parser.fail("empty expression")
    node = parser.expr()
    if parser.peek() is not None:
        parser.fail(f"unexpected {parser.peek().text!r}", parser.peek())
    return node


def _variables(node: Expr, acc: set) -> set:
    if isinstance(node, Var):
        acc.add((node.kind, node.index))
    elif isinstance(node, Unary):
        _variables(node.arg, acc)
    elif isinstance(node, Binary):
        _variables(node.left, acc)
        _variables(node.right, acc)
    return acc


def parse_source(text: str) -> ParsedSource:
    """Parse a full function file into component trees and dimensions."""
    comps: dict[int, Expr] = {}
    declared: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        directive = re.fullmatch(r"\s*(states|inputs)\s*:\s*(\d+)\s*", body)
        if directive:
            declared[directive.group(1)] = int(directive.group(2))
            continue
        head = re.match(r"\s*f(\d+)\s*=", body)
        if head is None:
            col = len(body) - len(body.lstrip()) + 1
            raise ParseError("expected 'f<i> = <expression>'", lineno, col)
        idx = int(head.group(1))
        if idx in comps:
            raise ArityMismatch(f"line {lineno}: component f{idx} defined twice")
        offset = head.end()
        tokens = _tokenize(body, lineno, offset)
        parser = _LineParser(tokens, lineno, len(body) + 1)
        if not tokens:
            raise ParseError("missing expression after '='", lineno, offset)
        node = parser.expr()
        if parser.peek() is not None:
            parser.fail(f"unexpected {parser.peek().text!r}", parser.peek())
        comps[idx] = node
    if not comps:
        raise ArityMismatch("no component definitions found")
    if sorted(comps) != list(range(len(comps))):
        raise ArityMismatch(f"components must be f0..f{len(comps) - 1}, got {sorted(comps)}")
    used = set()
    for node in comps.values():
        _variables(node, used)
    n = declared.get("states", len(comps))
    max_u = max((i for k, i in used if k == "u"), default=-1)
    m = declared.get("inputs", max_u + 1)
    if n < 1:
        raise ArityMismatch("at least one state is required")
    for kind, i in sorted(used):
        limit = n if kind == "x" else m
        if i >= limit:
            raise ArityMismatch(f"{kind}{i} used but only {limit} {'states' if kind == 'x' else 'inputs'} declared")
    return ParsedSource(tuple(comps[i] for i in range(len(comps))), n, m)


# ------------------------------------------------------------------ printing

def to_source(node: Expr) -> str:
    """Fully parenthesised text that parses back to the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"{node.kind}{node.index}"
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{to_source(node.arg)})"
        return f"{node.op}({to_source(node.arg)})"
    return f"({to_source(node.left)} {node.op} {to_source(node.right)})"


def format_source(components, n: int | None = None, m: int | None = None) -> str:
    lines = []
    if n is not None:
        lines.append(f"states: {n}")
    if m is not None:
        lines.append(f"inputs: {m}")
    lines += [f"f{i} = {to_source(c)}" for i, c in enumerate(components)]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ evaluation


def _domain_fail(msg: str, bad: np.ndarray, positions: np.ndarray):
    i = int(np.flatnonzero(bad)[0])
    raise DomainError(f"{msg} at position {positions[i].tolist()}")


def evaluate_expr(node: Expr, positions: np.ndarray, n: int) -> np.ndarray:
    """Evaluate a tree at every row of ``positions`` (columns: x then u)."""
    with np.errstate(all="ignore"):
        return _eval(node, positions, n)


def _eval(node: Expr, P: np.ndarray, n: int) -> np.ndarray:
    if isinstance(node, Num):
        return np.full(len(P), node.value)
    if isinstance(node, Var):
        return P[:, node.index if node.kind == "x" else n + node.index]
    if isinstance(node, Unary):
        a = _eval(node.arg, P, n)
        op = node.op
        if op == "neg":
            return -a
        if op == "sqrt":
            bad = a < 0
            if bad.any():
                _domain_fail("sqrt of a negative number", bad, P)
            return np.sqrt(a)
        if op == "acos":
            bad = np.abs(a) > 1.0 + ACOS_CLAMP
            if bad.any():
                _domain_fail("acos argument outside [-1, 1]", bad, P)
            return np.arccos(np.clip(a, -1.0, 1.0))
        return {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs, "sign": np.sign}[op](a)
    a = _eval(node.left, P, n)
    b = _eval(node.right, P, n)
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        bad = b == 0
        if bad.any():
            _domain_fail("division by zero", bad, P)
        return a / b
    out = np.power(a, b)
    bad = np.isnan(out) & ~np.isnan(a) & ~np.isnan(b)
    if bad.any():
        _domain_fail("power with a negative base and fractional exponent", bad, P)
    return out
