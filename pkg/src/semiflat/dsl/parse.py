"""Tokenizer, expression tree and recursive-descent parser for the potential DSL.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom (('^' | '**') unary)?
    atom   := NUMBER | 'pi' | NAME | FUNC '(' expr ')' | '(' expr ')'

Exponents must fold to a rational constant; they are kept as exact
``Fraction`` values so integer powers stay integer powers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

__all__ = [
    "ExpressionError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "Const",
    "Var",
    "BinOp",
    "Neg",
    "Pow",
    "Call",
    "Node",
    "Expression",
    "FUNCTIONS",
    "parse_expr",
]

FUNCTIONS = {"exp": 1, "log": 1, "sqrt": 1}
CONSTANTS = {"pi": math.pi}


class ExpressionError(ValueError):
    """Base class for parse failures; carries the character offset."""

    def __init__(self, message: str, position: int | None = None, source: str | None = None):
        self.position = position
        self.source = source
        if position is not None:
            message = f"{message} at position {position}"
            if source is not None:
                message += f"\n  {source}\n  {' ' * position}^"
        super().__init__(message)


class ExprSyntaxError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionError):
    pass


class ArityError(ExpressionError):
    pass


# --- tree -------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: Fraction


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Const, Var, BinOp, Neg, Pow, Call]


@dataclass(frozen=True)
class Expression:
    """Immutable parsed expression over a fixed, ordered variable list."""

    root: Node
    variables: tuple[str, ...]
    source: str

    @property
    def dim(self) -> int:
        return len(self.variables)

    def __call__(self, point):
        from .jets import evaluate

        return evaluate(self, point)

    def jet(self, point, order: int = 3):
        from .jets import eval_jet3

        return eval_jet3(self, point, order=order)

    def __str__(self) -> str:
        return self.source


# --- tokenizer --------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(src: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", pos, src)
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            if text in ("^", "**"):
                kind, text = "^", "^"
            tokens.append(_Token(kind, text, pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(src)))
    return tokens


# --- parser -----------------------------------------------------------------


class _Parser:
    def __init__(self, src: str, variables: Sequence[str]):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0
        self.var_index = {name: i for i, name in enumerate(variables)}

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.text != text or tok.kind == "number":
            found = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ExprSyntaxError(f"expected {text!r}, found {found}", tok.pos, self.src)
        return self.take()

    def error(self, message: str, tok: _Token | None = None) -> ExprSyntaxError:
        tok = tok or self.peek()
        return ExprSyntaxError(message, tok.pos, self.src)

    def parse(self) -> Node:
        if self.peek().kind == "end":
            raise self.error("empty expression")
        node = self.expr()
        if self.peek().kind != "end":
            raise self.error(f"unexpected token {self.peek().text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().text in ("+", "-") and self.peek().kind == "op":
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek().text in ("*", "/") and self.peek().kind == "op":
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("-", "+"):
            self.take()
            operand = self.unary()
            return Neg(operand) if tok.text == "-" else operand
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek().kind == "^":
            tok = self.take()
            exponent_node = self.unary()
            return Pow(base, self._fold_rational(exponent_node, tok))
        return base

    def atom(self) -> Node:
        tok = self.take()
        if tok.kind == "number":
            return Const(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "name":
            if tok.text in FUNCTIONS:
                return self._call(tok)
            if self.peek().text == "(" and self.peek().kind == "op":
                if tok.text in self.var_index or tok.text in CONSTANTS:
                    raise ArityError(f"{tok.text!r} is not a function", tok.pos, self.src)
                raise UnknownIdentifierError(f"unknown function {tok.text!r}", tok.pos, self.src)
            if tok.text in self.var_index:
                return Var(self.var_index[tok.text], tok.text)
            if tok.text in CONSTANTS:
                return Const(CONSTANTS[tok.text])
            raise UnknownIdentifierError(f"unknown identifier {tok.text!r}", tok.pos, self.src)
        if tok.kind == "end":
            raise self.error("unexpected end of input", tok)
        raise self.error(f"unexpected token {tok.text!r}", tok)

    def _call(self, name_tok: _Token) -> Node:
        if not (self.peek().kind == "op" and self.peek().text == "("):
            raise self.error(f"function {name_tok.text!r} requires an argument list")
        self.take()
        if self.peek().kind == "op" and self.peek().text == ")":
            raise ArityError(
                f"{name_tok.text} expects {FUNCTIONS[name_tok.text]} argument(s), got 0",
                name_tok.pos,
                self.src,
            )
        args = [self.expr()]
        while self.peek().kind == "op" and self.peek().text == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        if len(args) != FUNCTIONS[name_tok.text]:
            raise ArityError(
                f"{name_tok.text} expects {FUNCTIONS[name_tok.text]} argument(s), got {len(args)}",
                name_tok.pos,
                self.src,
            )
        return Call(name_tok.text, args[0])

    def _fold_rational(self, node: Node, tok: _Token) -> Fraction:
        def fold(n: Node) -> Fraction:
            if isinstance(n, Const):
                if n.value == math.pi:
                    raise self.error("exponent must be a rational constant", tok)
                return Fraction(repr(n.value))
            if isinstance(n, Neg):
                return -fold(n.operand)
            if isinstance(n, BinOp):
                a, b = fold(n.left), fold(n.right)
                if n.op == "+":
                    return a + b
                if n.op == "-":
                    return a - b
                if n.op == "*":
                    return a * b
                if b == 0:
                    raise self.error("division by zero in exponent", tok)
                return a / b
            if isinstance(n, Pow) and n.exponent.denominator == 1:
                base = fold(n.base)
                if base == 0 and n.exponent < 0:
                    raise self.error("division by zero in exponent", tok)
                return base ** int(n.exponent)
            raise self.error("exponent must be a rational constant", tok)

        return fold(node)


def parse_expr(src: str, variables: Sequence[str]) -> Expression:
    """Parse ``src`` into an :class:`Expression` over ``variables``.

    ``variables`` may be empty for constant expressions (phase targets such
    as ``"pi/4"``).
    """
    if not isinstance(src, str) or not src.strip():
        raise ExprSyntaxError("empty expression", 0, src if isinstance(src, str) else None)
    variables = tuple(variables)
    if len(set(variables)) != len(variables):
        raise ValueError(f"duplicate variable names in {variables}")
    for name in variables:
        if name in FUNCTIONS or name in CONSTANTS:
            raise ValueError(f"variable name {name!r} shadows a builtin")
    root = _Parser(src, variables).parse()
    return Expression(root=root, variables=variables, source=src)
