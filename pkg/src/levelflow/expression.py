"""Arithmetic expressions in ``x`` and ``y``: parsing, printing, evaluation.

Grammar (lowest to highest binding)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

``**`` is accepted as a synonym of ``^``. Evaluation is vectorised over numpy
arrays; undefined points (poles, logs of non-positive numbers, ...) come back
as NaN.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

UNARY_OPS = ("neg", "sin", "cos", "tan", "atan", "exp", "ln", "abs", "sqrt")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")

# name in text -> unary op
FUNCTIONS = {
    "sin": "sin",
    "cos": "cos",
    "tan": "tan",
    "tg": "tan",
    "atan": "atan",
    "arctan": "atan",
    "exp": "exp",
    "ln": "ln",
    "log": "ln",
    "abs": "abs",
    "sqrt": "sqrt",
}
NAMED_CONSTANTS = {"pi": math.pi, "e": math.e}
VARIABLES = ("x", "y")

_SYMBOLS = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}

# |cos(u)| below this marks a tangent pole
TAN_POLE_EPS = 1e-12


class ParseError(ValueError):
    """Raised for malformed expression text.

    ``offset`` is the byte offset of the offending token in the UTF-8 encoded
    input.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.message = message
        self.offset = offset


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str

    def __post_init__(self):
        if self.name not in VARIABLES:
            raise ValueError(f"unknown variable {self.name!r}")


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Expression"

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ValueError(f"unknown unary op {self.op!r}")


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expression"
    right: "Expression"

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {self.op!r}")


Expression = Union[Const, Var, Unary, Binary]


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    encoded_prefix = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", encoded_prefix)
        kind = m.lastgroup
        if kind != "ws":
            tok = m.group()
            tokens.append(_Token(kind, "^" if tok == "**" else tok, encoded_prefix))
        encoded_prefix += len(m.group().encode("utf-8"))
        pos = m.end()
    tokens.append(_Token("end", "", encoded_prefix))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Token:
        if self.tok.text != text or self.tok.kind == "end":
            found = self.tok.text or "end of input"
            raise ParseError(f"expected {text!r}, found {found!r}", self.tok.offset)
        return self.advance()

    def parse(self) -> Expression:
        node = self.expr()
        if self.tok.kind != "end":
            raise ParseError(f"unexpected token {self.tok.text!r}", self.tok.offset)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = "add" if self.advance().text == "+" else "sub"
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = "mul" if self.advance().text == "*" else "div"
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expression:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Unary("neg", self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return Binary("pow", base, self.unary())
        return base

    def atom(self) -> Expression:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Const(float(t.text))
        if t.kind == "name":
            self.advance()
            called = self.tok.kind == "op" and self.tok.text == "("
            if t.text in FUNCTIONS:
                if not called:
                    raise ParseError(f"function {t.text!r} expects 1 argument", t.offset)
                self.advance()
                arg = self.expr()
                if self.tok.kind == "op" and self.tok.text == ",":
                    raise ParseError(
                        f"function {t.text!r} expects 1 argument", self.tok.offset
                    )
                self.expect(")")
                return Unary(FUNCTIONS[t.text], arg)
            if t.text in VARIABLES or t.text in NAMED_CONSTANTS:
                if called:
                    raise ParseError(f"{t.text!r} is not a function", t.offset)
                if t.text in VARIABLES:
                    return Var(t.text)
                return Const(NAMED_CONSTANTS[t.text])
            raise ParseError(f"unknown identifier {t.text!r}", t.offset)
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = t.text or "end of input"
        raise ParseError(f"unexpected {found!r}", t.offset)


def parse_expression(text: str) -> Expression:
    """Parse ``text`` into an expression tree.

    >>> parse_expression("y - x^2")
    Binary(op='sub', left=Var(name='y'), right=Binary(op='pow', left=Var(name='x'), right=Const(value=2.0)))
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text).parse()


def to_text(node: Expression) -> str:
    """Render ``node`` as parseable text; every compound subterm is parenthesised."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{to_text(node.arg)})"
        return f"{node.op}({to_text(node.arg)})"
    return f"({to_text(node.left)} {_SYMBOLS[node.op]} {to_text(node.right)})"


def variables(node: Expression) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Unary):
        return variables(node.arg)
    if isinstance(node, Binary):
        return variables(node.left) | variables(node.right)
    return set()


# --------------------------------------------------------------------------
# evaluation

def _unary(op: str, a: np.ndarray) -> np.ndarray:
    if op == "neg":
        return -a
    if op == "sin":
        return np.sin(a)
    if op == "cos":
        return np.cos(a)
    if op == "tan":
        c = np.cos(a)
        return np.where(np.abs(c) < TAN_POLE_EPS, np.nan, np.sin(a) / c)
    if op == "atan":
        return np.arctan(a)
    if op == "exp":
        return np.exp(a)
    if op == "ln":
        return np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), np.nan)
    if op == "abs":
        return np.abs(a)
    if op == "sqrt":
        return np.where(a >= 0, np.sqrt(np.where(a >= 0, a, 0.0)), np.nan)
    raise ValueError(op)


def _binary(op: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return np.where(b != 0, a / np.where(b != 0, b, 1.0), np.nan)
    if op == "pow":
        return np.power(a, b)
    raise ValueError(op)


def _eval(node: Expression, x, y, guards: list | None):
    if isinstance(node, Const):
        return np.full(np.shape(x), node.value, dtype=float)
    if isinstance(node, Var):
        return np.asarray(x if node.name == "x" else y, dtype=float) + 0.0
    if isinstance(node, Unary):
        a = _eval(node.arg, x, y, guards)
        if guards is not None and node.op == "tan":
            guards.append(np.cos(a))
        return _unary(node.op, a)
    a = _eval(node.left, x, y, guards)
    b = _eval(node.right, x, y, guards)
    if guards is not None:
        if node.op == "div":
            guards.append(b)
        elif node.op == "pow" and not _is_nonneg_int_const(node.right):
            guards.append(a)
    return _binary(node.op, a, b)


def _is_nonneg_int_const(node: Expression) -> bool:
    return isinstance(node, Const) and node.value >= 0 and float(node.value).is_integer()


def evaluate_array(node: Expression, x, y) -> np.ndarray:
    """Evaluate on broadcastable arrays; non-finite results become NaN."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    with np.errstate(all="ignore"):
        out = _eval(node, x, y, None)
        out = np.where(np.isfinite(out), out, np.nan)
    return out


def evaluate_with_guards(node: Expression, x, y) -> tuple[np.ndarray, list[np.ndarray]]:
    """Evaluate and also return the singularity guard arrays.

    Each guard is a quantity whose zero set is a singular locus of the
    expression (tangent argument cosines, denominators, bases raised to
    non-integer or negative powers). A guard changing sign between two nearby
    points means a singularity lies between them.
    """
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    guards: list[np.ndarray] = []
    with np.errstate(all="ignore"):
        out = _eval(node, x, y, guards)
        out = np.where(np.isfinite(out), out, np.nan)
    return out, guards
