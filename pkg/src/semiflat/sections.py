"""Rational affine subspaces with unimodular integer frames, and constant sections.

A subspace ``V = span(Xi) + a`` of ``R^m`` carries an integer frame
``[Xi | Zeta]`` with determinant +-1.  The rows of its inverse are the
dual frame ``xi^1..xi^k, zeta^{k+1}..zeta^m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .atlas import Atlas
from .intlinalg import as_int_matrix, int_det, int_inverse, int_matmul, int_rank


class SectionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RationalAffineSubspace:
    Xi: np.ndarray
    Zeta: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        Xi = as_int_matrix(self.Xi, "Xi")
        a = np.asarray(self.a, dtype=float).reshape(-1)
        m = a.size
        if Xi.size == 0:
            Xi = Xi.reshape(m, 0)
        Zeta = np.asarray(self.Zeta)
        Zeta = as_int_matrix(Zeta.reshape(m, 0) if Zeta.size == 0 else Zeta, "Zeta")
        if Xi.shape[0] != m or Zeta.shape[0] != m:
            raise SectionError(f"Xi {Xi.shape} and Zeta {Zeta.shape} must have {m} rows to match a")
        if Xi.shape[1] + Zeta.shape[1] != m:
            raise SectionError(f"Xi and Zeta must have k and m-k columns, got {Xi.shape[1]} + {Zeta.shape[1]} != {m}")
        object.__setattr__(self, "Xi", Xi)
        object.__setattr__(self, "Zeta", Zeta)
        object.__setattr__(self, "a", a)

    @property
    def m(self) -> int:
        return self.a.size

    @property
    def k(self) -> int:
        return self.Xi.shape[1]

    @property
    def frame(self) -> np.ndarray:
        return np.hstack([self.Xi, self.Zeta])

    def contains(self, p, tol: float = 1e-10) -> bool:
        return offset_residual(self.Xi, np.asarray(p, dtype=float) - self.a) <= tol


@dataclass(frozen=True, eq=False)
class DualFrame:
    XiDual: np.ndarray  # k x m, rows xi^i
    ZetaDual: np.ndarray  # (m-k) x m, rows zeta^j

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack([self.XiDual, self.ZetaDual])


@dataclass
class SubspaceReport:
    valid: bool
    det: int
    m: int
    k: int


def validate_subspace(S: RationalAffineSubspace) -> SubspaceReport:
    det = int_det(S.frame)
    return SubspaceReport(abs(det) == 1, det, S.m, S.k)


def dual_basis(S: RationalAffineSubspace) -> DualFrame:
    """Exact integer inverse of ``[Xi | Zeta]`` split into dual rows."""
    if abs(int_det(S.frame)) != 1:
        raise SectionError("frame [Xi|Zeta] is not unimodular")
    inv = int_inverse(S.frame)
    return DualFrame(inv[: S.k], inv[S.k:])


def act_transition(P, b, S: RationalAffineSubspace) -> RationalAffineSubspace:
    """Group action ``(b, P) . V = P V + b`` with ``P`` unimodular."""
    P = as_int_matrix(P, "P")
    if abs(int_det(P)) != 1:
        raise SectionError("transition matrix is not unimodular")
    b = np.asarray(b, dtype=float).reshape(-1)
    return RationalAffineSubspace(int_matmul(P, S.Xi), int_matmul(P, S.Zeta), P @ S.a + b)


def compose(g1: tuple, g2: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Semidirect product ``(b1, P1)(b2, P2) = (b1 + P1 b2, P1 P2)``."""
    b1, P1 = g1
    b2, P2 = g2
    return np.asarray(b1, float) + np.asarray(P1) @ np.asarray(b2, float), int_matmul(P1, P2)


def offset_residual(Xi, d) -> float:
    """Euclidean distance of ``d`` from the column span of ``Xi``."""
    d = np.asarray(d, dtype=float)
    Xi = np.asarray(Xi, dtype=float)
    if Xi.shape[1] == 0:
        return float(np.linalg.norm(d))
    coef, *_ = np.linalg.lstsq(Xi, d, rcond=None)
    return float(np.linalg.norm(d - Xi @ coef))


@dataclass
class SubspaceComparison:
    span_equal: bool
    offset_residual: float

    def equal(self, tol: float = 1e-10) -> bool:
        return self.span_equal and self.offset_residual <= tol


def same_subspace(S1: RationalAffineSubspace, S2: RationalAffineSubspace) -> SubspaceComparison:
    """Set comparison: equal linear spans (exact rank) and offset gap in the span."""
    if S1.m != S2.m:
        raise SectionError("subspaces live in different dimensions")
    r1, r2 = int_rank(S1.Xi), int_rank(S2.Xi)
    r12 = int_rank(np.hstack([S1.Xi, S2.Xi])) if S1.k + S2.k else 0
    span_equal = r1 == r2 == r12
    return SubspaceComparison(span_equal, offset_residual(S1.Xi, S2.a - S1.a))


@dataclass(frozen=True, eq=False)
class ConstantSection:
    subspaces: Mapping[str, RationalAffineSubspace]

    def __post_init__(self):
        subs = dict(self.subspaces)
        if not subs:
            raise SectionError("section has no chart entries")
        ks = {S.k for S in subs.values()}
        ms = {S.m for S in subs.values()}
        if len(ks) != 1 or len(ms) != 1:
            raise SectionError("section entries disagree on k or m")
        object.__setattr__(self, "subspaces", subs)

    @property
    def k(self) -> int:
        return next(iter(self.subspaces.values())).k

    def __getitem__(self, cid: str) -> RationalAffineSubspace:
        try:
            return self.subspaces[cid]
        except KeyError:
            raise SectionError(f"section has no entry for chart {cid!r}") from None


@dataclass
class SectionPairCheck:
    source: str
    target: str
    span_equal: bool
    offset_residual: float
    ok: bool


@dataclass
class SectionReport:
    frames: dict[str, SubspaceReport] = field(default_factory=dict)
    transitions: list[SectionPairCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(f.valid for f in self.frames.values()) and all(t.ok for t in self.transitions)


def validate_constant_section(atlas: Atlas, V: ConstantSection, tol: float = 1e-10) -> SectionReport:
    """Check ``V_src = (b, A^T) . V_dst`` for every stored transition ``src -> dst``."""
    atlas = atlas.with_computed_b()
    report = SectionReport()
    for cid in atlas.charts:
        S = V[cid]
        if S.m != atlas.m:
            raise SectionError(f"section entry for {cid!r} has m={S.m}, atlas has m={atlas.m}")
        report.frames[cid] = validate_subspace(S)
    for t in atlas.transitions:
        moved = act_transition(t.group_matrix, t.b, V[t.target])
        cmp = same_subspace(V[t.source], moved)
        report.transitions.append(
            SectionPairCheck(t.source, t.target, cmp.span_equal, cmp.offset_residual, cmp.equal(tol))
        )
    return report
