"""Forward-mode derivatives of DSL expressions via nested first-order duals.

A level-``L`` :class:`Dual` is ``re + eps * e_L`` with ``e_L**2 = 0`` and
coefficients that are duals of lower level (or plain floats/ndarrays).
Seeding variable ``v`` as ``x_v + d_vi e_1 + d_vj e_2 + d_vk e_3`` and
reading the ``e_1 e_2 e_3`` coefficient yields the mixed third derivative
``f_ijk``; the lower coefficients give the value, gradient and Hessian
entries along the way.

Leaves may be numpy arrays, so one pass evaluates a whole batch of points.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement, permutations

import numpy as np

from .parse import BinOp, Call, Const, Expression, Neg, Pow, Var

__all__ = ["DomainError", "Dual", "Jet3", "evaluate", "eval_jet3", "symmetrize"]


class DomainError(ArithmeticError):
    """Expression evaluated outside its domain (log of non-positive, x/0, ...)."""


class Dual:
    __slots__ = ("re", "eps", "level")
    __array_ufunc__ = None  # keep numpy from wrapping duals in object arrays

    def __init__(self, re, eps, level: int):
        self.re = re
        self.eps = eps
        self.level = level

    def _same(self, other) -> bool:
        return isinstance(other, Dual) and other.level == self.level

    def _defer(self, other) -> bool:
        return isinstance(other, Dual) and other.level > self.level

    def __add__(self, other):
        if self._same(other):
            return Dual(self.re + other.re, self.eps + other.eps, self.level)
        if self._defer(other):
            return NotImplemented
        return Dual(self.re + other, self.eps, self.level)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.re, -self.eps, self.level)

    def __sub__(self, other):
        if self._same(other):
            return Dual(self.re - other.re, self.eps - other.eps, self.level)
        if self._defer(other):
            return NotImplemented
        return Dual(self.re - other, self.eps, self.level)

    def __rsub__(self, other):
        return Dual(other - self.re, -self.eps, self.level)

    def __mul__(self, other):
        if self._same(other):
            return Dual(self.re * other.re, self.re * other.eps + self.eps * other.re, self.level)
        if self._defer(other):
            return NotImplemented
        return Dual(self.re * other, self.eps * other, self.level)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if self._same(other):
            return Dual(
                self.re / other.re,
                (self.eps * other.re - self.re * other.eps) / (other.re * other.re),
                self.level,
            )
        if self._defer(other):
            return NotImplemented
        return Dual(self.re / other, self.eps / other, self.level)

    def __rtruediv__(self, other):
        return Dual(other / self.re, -(other * self.eps) / (self.re * self.re), self.level)


def _primal(x):
    while isinstance(x, Dual):
        x = x.re
    return x


def _exp(x):
    if isinstance(x, Dual):
        e = _exp(x.re)
        return Dual(e, e * x.eps, x.level)
    return np.exp(x)


def _log(x):
    if isinstance(x, Dual):
        return Dual(_log(x.re), x.eps / x.re, x.level)
    return np.log(x)


def _pow(x, p: Fraction):
    if p == 0:
        return 1.0
    if p == 1:
        return x
    if isinstance(x, Dual):
        return Dual(_pow(x.re, p), float(p) * _pow(x.re, p - 1) * x.eps, x.level)
    if p.denominator == 1:
        n = int(p)
        if n < 0:
            return 1.0 / np.power(x, -n)
        return np.power(x, n)
    return np.power(x, float(p))


def _check(cond_bad, message: str):
    bad = np.asarray(cond_bad)
    if bad.any():
        count = int(bad.sum())
        raise DomainError(message if count == 1 else f"{message} ({count} points)")


def _eval(node, env):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return env[node.index]
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        _check(_primal(b) == 0, "division by zero")
        return a / b
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Pow):
        base = _eval(node.base, env)
        p = node.exponent
        prim = _primal(base)
        if p.denominator != 1:
            _check(prim <= 0, f"non-integer power {p} of non-positive base")
        elif p < 0:
            _check(prim == 0, "negative power of zero")
        return _pow(base, p)
    if isinstance(node, Call):
        arg = _eval(node.arg, env)
        prim = _primal(arg)
        if node.func == "exp":
            return _exp(arg)
        if node.func == "log":
            _check(prim <= 0, "log of non-positive argument")
            return _log(arg)
        if node.func == "sqrt":
            _check(prim <= 0, "sqrt of non-positive argument")
            return _pow(arg, Fraction(1, 2))
    raise TypeError(f"unknown node {node!r}")


def _as_points(e: Expression, p) -> tuple[np.ndarray, bool]:
    pts = np.asarray(p, dtype=float)
    batched = pts.ndim == 2
    if pts.ndim == 0 or pts.ndim > 2 or pts.shape[-1] != e.dim:
        raise ValueError(f"expected point(s) of dimension {e.dim}, got shape {pts.shape}")
    return pts, batched


def evaluate(e: Expression, p):
    """Value of ``e`` at a point (shape ``(n,)``) or a batch (shape ``(N, n)``)."""
    pts, batched = _as_points(e, p)
    env = [pts[..., i] for i in range(e.dim)]
    with np.errstate(all="ignore"):
        out = _eval(e.root, env)
    out = np.broadcast_to(np.asarray(out, dtype=float), pts.shape[:-1]).copy()
    return out if batched else float(out)


@dataclass
class Jet3:
    """Value and derivatives up to order three.

    With a batch of ``N`` points every field carries a leading ``N`` axis.
    Fields above the requested order are ``None``.
    """

    value: np.ndarray | float
    gradient: np.ndarray
    hessian: np.ndarray | None = None
    third: np.ndarray | None = None


def symmetrize(t: np.ndarray, rank: int) -> np.ndarray:
    """Average the trailing ``rank`` axes of ``t`` over all permutations."""
    lead = t.ndim - rank
    perms = list(permutations(range(rank)))
    acc = np.zeros_like(t)
    for perm in perms:
        acc += np.transpose(t, tuple(range(lead)) + tuple(lead + q for q in perm))
    return acc / len(perms)


def _take(x, path):
    # path lists 're'/'eps' from outermost (highest) level down to level 1
    for level, attr in zip(range(len(path), 0, -1), path):
        if isinstance(x, Dual) and x.level == level:
            x = getattr(x, attr)
        elif attr == "eps":
            return 0.0
    return x


def eval_jet3(e: Expression, p, order: int = 3) -> Jet3:
    """Exact value/gradient/Hessian/third-derivative tensor of ``e`` at ``p``.

    ``order`` (1, 2 or 3) limits the work to the derivatives actually needed.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    pts, batched = _as_points(e, p)
    n = e.dim
    lead = pts.shape[:-1]
    value = None
    grad = np.zeros(lead + (n,))
    hess = np.zeros(lead + (n, n)) if order >= 2 else None
    third = np.zeros(lead + (n, n, n)) if order >= 3 else None

    def full(x):
        return np.broadcast_to(np.asarray(x, dtype=float), lead)

    with np.errstate(all="ignore"):
        for idx in combinations_with_replacement(range(n), order):
            env = []
            for v in range(n):
                x = pts[..., v]
                for level, d in enumerate(idx, start=1):
                    x = Dual(x, 1.0 if v == d else 0.0, level)
                env.append(x)
            out = _eval(e.root, env)
            if value is None:
                value = full(_take(out, ("re",) * order))
            if order == 1:
                (i,) = idx
                grad[..., i] = full(_take(out, ("eps",)))
            elif order == 2:
                i, j = idx
                grad[..., i] = full(_take(out, ("re", "eps")))
                grad[..., j] = full(_take(out, ("eps", "re")))
                hess[..., i, j] = hess[..., j, i] = full(_take(out, ("eps", "eps")))
            else:
                i, j, k = idx
                grad[..., i] = full(_take(out, ("re", "re", "eps")))
                grad[..., j] = full(_take(out, ("re", "eps", "re")))
                grad[..., k] = full(_take(out, ("eps", "re", "re")))
                hess[..., i, j] = hess[..., j, i] = full(_take(out, ("re", "eps", "eps")))
                hess[..., i, k] = hess[..., k, i] = full(_take(out, ("eps", "re", "eps")))
                hess[..., j, k] = hess[..., k, j] = full(_take(out, ("eps", "eps", "re")))
                t = full(_take(out, ("eps", "eps", "eps")))
                for a, b, c in set(permutations((i, j, k))):
                    third[..., a, b, c] = t

    if n == 0:
        with np.errstate(all="ignore"):
            value = full(_eval(e.root, []))
    if hess is not None:
        hess = symmetrize(hess, 2)
    if third is not None:
        third = symmetrize(third, 3)
    if not batched:
        value = float(value)
    else:
        value = np.array(value)
    return Jet3(value=value, gradient=grad, hessian=hess, third=third)
