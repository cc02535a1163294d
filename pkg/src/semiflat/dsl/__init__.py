"""Small arithmetic DSL for potentials and fields, with exact third-order jets."""

from .jets import DomainError, Jet3, eval_jet3, evaluate, symmetrize
from .parse import (
    ArityError,
    Expression,
    ExpressionError,
    ExprSyntaxError,
    UnknownIdentifierError,
    parse_expr,
)

__all__ = [
    "ArityError",
    "DomainError",
    "Expression",
    "ExpressionError",
    "ExprSyntaxError",
    "Jet3",
    "UnknownIdentifierError",
    "eval_jet3",
    "evaluate",
    "parse_expr",
    "symmetrize",
]
