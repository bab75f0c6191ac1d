"""Expression language for maps, diffeomorphisms and test functions.

Expressions are parsed by recursive descent with precedence climbing into an
immutable AST and evaluated vectorised over numpy arrays. See ``docs/grammar.md``
for the grammar.

Variables are ``x1..x<arity>``; forms over ``(x, y)`` additionally use
``y1..y<y_arity>``, which occupy coordinate slots ``arity .. arity+y_arity-1``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgumentError


class ExpressionError(InvalidArgumentError):
    """Base class for expression diagnostics; carries a 1-based line and column."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


class ExprSyntaxError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionError):
    pass


class ArityError(ExpressionError):
    """A variable outside the declared arity, or a function called with the wrong argument count."""


@dataclass(frozen=True)
class Span:
    line: int
    column: int
    end: int


# --- AST -----------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    slot: int
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Const:
    name: str
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    operand: "Node"
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Bump:
    center: tuple
    radius: "Node"
    span: Span | None = field(default=None, compare=False, repr=False)


Node = Num | Var | Const | Neg | BinOp | Call | Bump

CONSTANTS = {"pi": math.pi, "e": math.e}

# name -> (min args, max args or None)
FUNCTIONS = {
    "sin": (1, 1),
    "cos": (1, 1),
    "exp": (1, 1),
    "sqrt": (1, 1),
    "abs": (1, 1),
    "log": (1, 1),
    "atan2": (2, 2),
    "norm": (1, None),
    "min": (1, None),
    "max": (1, None),
}

# --- tokenizer -----------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            tokens.append(_Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


# --- parser --------------------------------------------------------------


class _Parser:
    def __init__(self, source: str, arity: int, y_arity: int):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.arity = arity
        self.y_arity = y_arity

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.text != text or tok.kind == "eof":
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise ExprSyntaxError(f"expected {text!r}, found {found}", tok.line, tok.column)
        return self.next()

    def span(self, start: _Token) -> Span:
        prev = self.tokens[self.pos - 1]
        end = prev.column + len(prev.text) if prev.line == start.line else start.column + len(start.text)
        return Span(start.line, start.column, end)

    def parse(self) -> Node:
        if self.peek().kind == "eof":
            tok = self.peek()
            raise ExprSyntaxError("empty expression", tok.line, tok.column)
        node = self.expr()
        tok = self.peek()
        if tok.kind != "eof":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.line, tok.column)
        return node

    def expr(self) -> Node:
        start = self.peek()
        node = self.term()
        while self.peek().text in ("+", "-") and self.peek().kind == "op":
            op = self.next().text
            node = BinOp(op, node, self.term(), self.span(start))
        return node

    def term(self) -> Node:
        start = self.peek()
        node = self.power()
        while self.peek().text in ("*", "/") and self.peek().kind == "op":
            op = self.next().text
            node = BinOp(op, node, self.power(), self.span(start))
        return node

    def power(self) -> Node:
        # right-associative; the base is a unary so -a^b == (-a)^b
        start = self.peek()
        base = self.unary()
        if self.peek().text == "^":
            self.next()
            return BinOp("^", base, self.power(), self.span(start))
        return base

    def unary(self) -> Node:
        start = self.peek()
        if start.text == "-" and start.kind == "op":
            self.next()
            return Neg(self.unary(), self.span(start))
        if start.text == "+" and start.kind == "op":
            self.next()
            return self.unary()
        return self.atom()

    def atom(self) -> Node:
        tok = self.next()
        if tok.kind == "num":
            return Num(float(tok.text), self.span(tok))
        if tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "ident":
            if self.peek().text == "(":
                return self.call(tok)
            return self.identifier(tok)
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ExprSyntaxError(f"unexpected {found}", tok.line, tok.column)

    def identifier(self, tok: _Token) -> Node:
        name = tok.text
        m = re.fullmatch(r"([xy])([1-9]\d*)", name)
        if m:
            idx = int(m.group(2))
            limit = self.arity if m.group(1) == "x" else self.y_arity
            if idx > limit:
                raise ArityError(f"variable {name} exceeds declared arity {limit}", tok.line, tok.column)
            slot = idx - 1 if m.group(1) == "x" else self.arity + idx - 1
            return Var(name, slot, self.span(tok))
        if name in CONSTANTS:
            return Const(name, self.span(tok))
        if name in FUNCTIONS or name == "bump":
            raise ExprSyntaxError(f"function {name} needs an argument list", tok.line, tok.column)
        raise UnknownIdentifierError(f"unknown identifier {name!r}", tok.line, tok.column)

    def arglist(self, stop: tuple[str, ...]) -> list[Node]:
        args = [self.expr()]
        while self.peek().text == ",":
            self.next()
            args.append(self.expr())
        if self.peek().text not in stop:
            tok = self.peek()
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise ExprSyntaxError(f"expected one of {', '.join(map(repr, stop))}, found {found}", tok.line, tok.column)
        return args

    def call(self, name_tok: _Token) -> Node:
        name = name_tok.text
        self.expect("(")
        if name == "bump":
            center = self.arglist((";",))
            self.expect(";")
            radius = self.expr()
            self.expect(")")
            if len(center) > self.arity + self.y_arity:
                raise ArityError(
                    f"bump center has {len(center)} coordinates, arity is {self.arity + self.y_arity}",
                    name_tok.line,
                    name_tok.column,
                )
            return Bump(tuple(center), radius, self.span(name_tok))
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function {name!r}", name_tok.line, name_tok.column)
        args = self.arglist((")",))
        self.expect(")")
        lo, hi = FUNCTIONS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            want = str(lo) if lo == hi else f"at least {lo}"
            raise ArityError(f"{name} takes {want} argument(s), got {len(args)}", name_tok.line, name_tok.column)
        return Call(name, tuple(args), self.span(name_tok))


# --- printer -------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_source(node: Node) -> str:
    """Print an AST back to source text; parsing the result reproduces the AST."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        if isinstance(node.operand, BinOp):
            inner = f"({inner})"
        return "-" + inner
    if isinstance(node, Call):
        return f"{node.name}({','.join(to_source(a) for a in node.args)})"
    if isinstance(node, Bump):
        return f"bump({','.join(to_source(c) for c in node.center)};{to_source(node.radius)})"
    p = _PREC[node.op]
    left, right = to_source(node.left), to_source(node.right)
    if isinstance(node.left, BinOp):
        lp = _PREC[node.left.op]
        if lp < p or (node.op == "^" and lp == p):
            left = f"({left})"
    if isinstance(node.right, BinOp):
        rp = _PREC[node.right.op]
        if rp < p or (rp == p and node.op != "^"):
            right = f"({right})"
    return f"{left}{node.op}{right}"


# --- evaluation ----------------------------------------------------------


def _div(a, b):
    b = np.asarray(b, dtype=float)
    out = np.divide(a, b)
    return np.where(b == 0.0, np.nan, out)


def _bump(coords, center, radius):
    r = np.asarray(radius, dtype=float)
    q = 0.0
    for x, c in zip(coords, center):
        q = q + (x - c) ** 2
    q = q / (r * r)
    inside = q < 1.0
    safe = np.where(inside, 1.0 - q, 1.0)
    return np.where(inside, np.exp(1.0 - 1.0 / safe), 0.0)


def _eval(node: Node, coords: Sequence[np.ndarray]):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return coords[node.slot]
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Neg):
        return -_eval(node.operand, coords)
    if isinstance(node, BinOp):
        a, b = _eval(node.left, coords), _eval(node.right, coords)
        if node.op == "+":
            return np.add(a, b)
        if node.op == "-":
            return np.subtract(a, b)
        if node.op == "*":
            return np.multiply(a, b)
        if node.op == "/":
            return _div(a, b)
        return np.power(np.asarray(a, dtype=float), b)
    if isinstance(node, Bump):
        center = [_eval(c, coords) for c in node.center]
        return _bump(coords[: len(center)], center, _eval(node.radius, coords))
    args = [_eval(a, coords) for a in node.args]
    name = node.name
    if name == "norm":
        return np.sqrt(sum(np.square(a) for a in args))
    if name == "min":
        return np.minimum.reduce(np.broadcast_arrays(*args)) if len(args) > 1 else args[0]
    if name == "max":
        return np.maximum.reduce(np.broadcast_arrays(*args)) if len(args) > 1 else args[0]
    if name == "atan2":
        return np.arctan2(args[0], args[1])
    fn: Callable = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs, "log": np.log}[name]
    return fn(args[0])


@dataclass(frozen=True)
class Expression:
    """A parsed scalar expression with its declared arity."""

    ast: Node
    arity: int
    y_arity: int = 0
    source: str = field(default="", compare=False)

    @property
    def width(self) -> int:
        return self.arity + self.y_arity

    def __str__(self) -> str:
        return to_source(self.ast)

    def evaluate_coords(self, coords: Sequence) -> np.ndarray:
        """Evaluate on a list of broadcastable coordinate arrays, one per slot."""
        if len(coords) != self.width:
            raise InvalidArgumentError(f"expected {self.width} coordinate arrays, got {len(coords)}")
        coords = [np.asarray(c, dtype=float) for c in coords]
        shape = np.broadcast_shapes(*(c.shape for c in coords)) if coords else ()
        with np.errstate(all="ignore"):
            out = _eval(self.ast, coords)
        return np.array(np.broadcast_to(np.asarray(out, dtype=float), shape))

    def __call__(self, point) -> np.ndarray | float:
        return evaluate(self, point)


def parse(source: str, arity: int, y_arity: int = 0) -> Expression:
    """Parse ``source`` into an :class:`Expression` over ``x1..x<arity>`` (and ``y1..``)."""
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 1, 1)
    ast = _Parser(source, arity, y_arity).parse()
    return Expression(ast, arity, y_arity, source)


def evaluate(e: Expression, point) -> np.ndarray | float:
    """Evaluate at a point (or a batch: last axis holds the coordinates)."""
    p = np.asarray(point, dtype=float)
    if p.shape[-1:] != (e.width,):
        raise InvalidArgumentError(f"point length {p.shape[-1:] or 0} does not match arity {e.width}")
    out = e.evaluate_coords([p[..., i] for i in range(e.width)])
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class VectorExpression:
    components: tuple[Expression, ...]

    def __post_init__(self):
        if not self.components:
            raise InvalidArgumentError("a vector expression needs at least one component")
        widths = {(c.arity, c.y_arity) for c in self.components}
        if len(widths) != 1:
            raise InvalidArgumentError("components must share one arity")

    @property
    def arity(self) -> int:
        return self.components[0].arity

    @property
    def codim(self) -> int:
        return len(self.components)

    def evaluate_coords(self, coords) -> np.ndarray:
        """Stack component values on a trailing axis."""
        return np.stack([c.evaluate_coords(coords) for c in self.components], axis=-1)

    def __call__(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        return self.evaluate_coords([p[..., i] for i in range(p.shape[-1])])

    def __str__(self) -> str:
        return "(" + ", ".join(str(c) for c in self.components) + ")"


def parse_vector(sources: Sequence[str], arity: int, y_arity: int = 0) -> VectorExpression:
    return VectorExpression(tuple(parse(s, arity, y_arity) for s in sources))
