"""Tropical atlases: charts with convex potentials and integral-affine transitions.

Conventions.  A transition ``lam -> mu`` stores the coordinate change
``x_mu = A @ x_lam + c`` with ``A`` integral and unimodular, and
``b = grad_lam(K_lam - K_mu o phi)``.  The element of ``R^m x| GL(Z^m)``
that acts on Legendre coordinates and on rational affine subspaces is
``(b, A.T)``:  ``grad K_lam(x) = A.T @ grad K_mu(A x + c) + b``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dsl import Expression
from .intlinalg import as_int_matrix, int_det, int_inverse, int_matmul

SPD_THRESHOLD = 1e-10


class AtlasError(ValueError):
    """Malformed atlas input (dangling chart id, shape mismatch, ...)."""


class UnknownChartError(AtlasError):
    pass


class OutsideDomainError(ValueError):
    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class DegenerateMetricError(ValueError):
    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


@dataclass(frozen=True, eq=False)
class Box:
    """Closed axis-aligned box ``[lo_1, hi_1] x ... x [lo_n, hi_n]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have matching lengths")
        if np.any(hi < lo):
            raise ValueError(f"box has lo > hi: {lo.tolist()} vs {hi.tolist()}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "Box":
        arr = np.asarray(pairs, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"box must be a list of [lo, hi] pairs, got {pairs!r}")
        return cls(arr[:, 0], arr[:, 1])

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def volume(self) -> float:
        return float(np.prod(np.maximum(self.hi - self.lo, 0.0)))

    def contains(self, x, tol: float = 0.0):
        x = np.asarray(x, dtype=float)
        inside = np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)
        return bool(inside) if inside.ndim == 0 else inside

    def shrink(self, margin: float) -> "Box":
        return Box(self.lo + margin, self.hi - margin)

    def grid(self, n: int) -> np.ndarray:
        """Tensor grid with ``n`` nodes per axis, lexicographic order, shape (n**dim, dim)."""
        axes = [np.linspace(a, b, n) for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in mesh], axis=-1)

    def to_pairs(self) -> list[list[float]]:
        return [[float(a), float(b)] for a, b in zip(self.lo, self.hi)]


@dataclass(frozen=True, eq=False)
class Chart:
    id: str
    domain: Box
    potential: Expression

    def __post_init__(self):
        if self.potential.dim != self.domain.dim:
            raise AtlasError(
                f"chart {self.id!r}: potential has {self.potential.dim} variables, box has {self.domain.dim}"
            )
        if self.domain.volume <= 0:
            raise AtlasError(f"chart {self.id!r}: domain box has no interior")

    @property
    def m(self) -> int:
        return self.domain.dim

    def require_inside(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.m:
            raise ValueError(f"chart {self.id!r} expects points of dimension {self.m}, got {x.shape}")
        inside = np.atleast_1d(self.domain.contains(x))
        if not inside.all():
            bad = x.reshape(-1, self.m)[~inside][0]
            raise OutsideDomainError(f"point {bad.tolist()} is outside the domain of chart {self.id!r}", bad)
        return x


@dataclass(frozen=True, eq=False)
class TransitionMap:
    source: str
    target: str
    A: np.ndarray
    c: np.ndarray
    b: np.ndarray | None = None
    overlap: Box | None = None
    b_computed: bool = False

    def __post_init__(self):
        A = as_int_matrix(self.A, f"A({self.source}->{self.target})")
        m = A.shape[0]
        if A.shape != (m, m):
            raise AtlasError(f"A({self.source}->{self.target}) must be square, got {A.shape}")
        c = np.zeros(m) if self.c is None else np.asarray(self.c, dtype=float).reshape(-1)
        if c.shape != (m,):
            raise AtlasError(f"c({self.source}->{self.target}) must have length {m}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)
        if self.b is not None:
            b = np.asarray(self.b, dtype=float).reshape(-1)
            if b.shape != (m,):
                raise AtlasError(f"b({self.source}->{self.target}) must have length {m}")
            object.__setattr__(self, "b", b)
        if self.overlap is not None and self.overlap.dim != m:
            raise AtlasError(f"overlap box of {self.source}->{self.target} has wrong dimension")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def group_matrix(self) -> np.ndarray:
        """Linear part of the group element acting on Legendre coordinates."""
        return self.A.T

    def apply(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.A.T + self.c

    def apply_inverse(self, y) -> np.ndarray:
        Ainv = int_inverse(self.A)
        return (np.asarray(y, dtype=float) - self.c) @ Ainv.T

    def inverse(self) -> "TransitionMap":
        Ainv = int_inverse(self.A)
        b = None if self.b is None else -(Ainv.T @ self.b)
        return TransitionMap(self.target, self.source, Ainv, -(Ainv @ self.c), b, None, self.b_computed)


@dataclass(frozen=True, eq=False)
class Atlas:
    charts: Mapping[str, Chart]
    transitions: tuple[TransitionMap, ...] = ()

    def __post_init__(self):
        charts = dict(self.charts)
        if not charts:
            raise AtlasError("atlas has no charts")
        dims = {ch.m for ch in charts.values()}
        if len(dims) != 1:
            raise AtlasError(f"charts disagree on dimension: {sorted(dims)}")
        for key, ch in charts.items():
            if key != ch.id:
                raise AtlasError(f"chart stored under {key!r} has id {ch.id!r}")
        m = dims.pop()
        for t in self.transitions:
            for cid in (t.source, t.target):
                if cid not in charts:
                    raise UnknownChartError(f"transition {t.source}->{t.target} names unknown chart {cid!r}")
            if t.source == t.target:
                raise AtlasError(f"transition from {t.source!r} to itself")
            if t.m != m:
                raise AtlasError(f"transition {t.source}->{t.target} has dimension {t.m}, atlas has {m}")
        object.__setattr__(self, "charts", charts)
        object.__setattr__(self, "transitions", tuple(self.transitions))

    @classmethod
    def from_parts(cls, charts: Iterable[Chart], transitions: Iterable[TransitionMap] = ()) -> "Atlas":
        return cls({ch.id: ch for ch in charts}, tuple(transitions))

    @property
    def m(self) -> int:
        return next(iter(self.charts.values())).m

    def chart(self, cid: str) -> Chart:
        try:
            return self.charts[cid]
        except KeyError:
            raise UnknownChartError(f"unknown chart {cid!r}") from None

    def transition(self, source: str, target: str) -> TransitionMap | None:
        """Stored transition ``source -> target``, or the inverse of a stored one."""
        for t in self.transitions:
            if t.source == source and t.target == target:
                return t
        for t in self.transitions:
            if t.source == target and t.target == source:
                return t.inverse()
        return None

    def with_computed_b(self) -> "Atlas":
        """Fill in missing ``b`` from the potentials at each overlap centre."""
        filled = []
        for t in self.transitions:
            if t.b is None:
                if t.overlap is None:
                    raise AtlasError(f"transition {t.source}->{t.target} has neither b nor an overlap box")
                b = potential_difference_gradient(self, t, t.overlap.center)
                t = replace(t, b=b, b_computed=True)
            filled.append(t)
        return Atlas(self.charts, tuple(filled))


# --- chart-level operations ---------------------------------------------------


def legendre_coords(ch: Chart, x) -> np.ndarray:
    """Legendre coordinates ``grad K(x)``; this is also the local moment map."""
    x = ch.require_inside(x)
    return ch.potential.jet(x, order=1).gradient


def hessian_metric(ch: Chart, x, spd_threshold: float = SPD_THRESHOLD) -> np.ndarray:
    """Hessian metric ``g_ij = d^2 K / dx_i dx_j``; raises if not positive definite."""
    x = ch.require_inside(x)
    H = ch.potential.jet(x, order=2).hessian
    lam = np.linalg.eigvalsh(H).min(axis=-1)
    worst = float(np.min(lam))
    if worst < spd_threshold:
        raise DegenerateMetricError(
            f"Hessian of the potential on chart {ch.id!r} is not positive definite "
            f"(min eigenvalue {worst:.3e})",
            worst,
        )
    return H


def dual_potential(ch: Chart, x):
    """Legendre dual ``K~(x~) = <x~, x> - K(x)`` evaluated at ``x~ = grad K(x)``."""
    x = ch.require_inside(x)
    jet = ch.potential.jet(x, order=1)
    return np.sum(jet.gradient * x, axis=-1) - jet.value


def ricci_flat_residual(ch: Chart, grid) -> float:
    """Spread ``max |det Hess K - mean det Hess K|`` over the sample set."""
    pts = ch.require_inside(np.atleast_2d(np.asarray(grid, dtype=float)))
    if pts.shape[0] < 2:
        raise ValueError("need at least two sample points")
    dets = np.linalg.det(ch.potential.jet(pts, order=2).hessian)
    return float(np.max(np.abs(dets - dets.mean())))


def potential_difference_gradient(atlas: Atlas, t: TransitionMap, x) -> np.ndarray:
    """``grad_lam [K_lam(x) - K_mu(A x + c)]`` at source-chart point(s) ``x``."""
    src, dst = atlas.chart(t.source), atlas.chart(t.target)
    x = np.asarray(x, dtype=float)
    g_src = src.potential.jet(x, order=1).gradient
    g_dst = dst.potential.jet(t.apply(x), order=1).gradient
    return g_src - g_dst @ t.A


# --- validation ---------------------------------------------------------------


@dataclass
class ChartCheck:
    id: str
    min_eigenvalue: float
    samples: int
    convex: bool


@dataclass
class TransitionCheck:
    source: str
    target: str
    det: int
    integral: bool
    unimodular: bool
    b: list[float]
    b_computed: bool
    samples: int
    samples_outside_target: int
    affine_residual: float
    gradient_residual: float


@dataclass
class CocycleCheck:
    charts: tuple[str, str, str]
    A_residual: int
    c_residual: float
    b_residual: float


@dataclass
class AtlasReport:
    charts: list[ChartCheck] = field(default_factory=list)
    transitions: list[TransitionCheck] = field(default_factory=list)
    cocycles: list[CocycleCheck] = field(default_factory=list)
    tolerance: float = 1e-10

    @property
    def ok(self) -> bool:
        tol = self.tolerance
        return (
            all(c.convex for c in self.charts)
            and all(
                t.unimodular and t.samples_outside_target == 0
                and t.affine_residual <= tol * 1e2 and t.gradient_residual <= tol * 1e2
                for t in self.transitions
            )
            and all(c.A_residual == 0 and c.b_residual <= tol and c.c_residual <= tol for c in self.cocycles)
        )


def validate_atlas(atlas: Atlas, samples_per_box: int = 5, tol: float = 1e-10) -> AtlasReport:
    """Check unimodularity, affine compatibility of potentials, cocycles and convexity.

    Failures are recorded in the report, never raised.  Missing ``b`` values
    are computed from the potentials first.
    """
    if samples_per_box < 2:
        raise ValueError("samples_per_box must be at least 2")
    atlas = atlas.with_computed_b()
    report = AtlasReport(tolerance=tol)

    for ch in atlas.charts.values():
        pts = ch.domain.grid(samples_per_box)
        H = ch.potential.jet(pts, order=2).hessian
        lam = float(np.linalg.eigvalsh(H).min())
        report.charts.append(ChartCheck(ch.id, lam, len(pts), lam >= SPD_THRESHOLD))

    for t in atlas.transitions:
        src, dst = atlas.chart(t.source), atlas.chart(t.target)
        det = int_det(t.A)
        pts = t.overlap.grid(samples_per_box) if t.overlap is not None else src.domain.grid(samples_per_box)
        pts = pts[np.atleast_1d(src.domain.contains(pts))]
        img = t.apply(pts)
        keep = np.atleast_1d(dst.domain.contains(img))
        pts, img = pts[keep], img[keep]
        affine = grad_res = float("nan")
        if len(pts):
            js = src.potential.jet(pts, order=2)
            jd = dst.potential.jet(img, order=2)
            hdiff = js.hessian - np.einsum("ji,njk,kl->nil", t.A, jd.hessian, t.A)
            affine = float(np.max(np.abs(hdiff)))
            gdiff = js.gradient - jd.gradient @ t.A
            grad_res = float(np.max(np.abs(gdiff - t.b)))
        report.transitions.append(
            TransitionCheck(
                t.source, t.target, det, True, abs(det) == 1, t.b.tolist(), t.b_computed,
                int(len(pts)), int((~keep).sum()), affine, grad_res,
            )
        )

    ids = list(atlas.charts)
    for lam, nu, mu in itertools.permutations(ids, 3):
        t_ln, t_nm, t_lm = atlas.transition(lam, nu), atlas.transition(nu, mu), atlas.transition(lam, mu)
        if t_ln is None or t_nm is None or t_lm is None:
            continue
        # (b, P)(lam,mu) = (b, P)(lam,nu) . (b, P)(nu,mu) with P = A.T
        P = int_matmul(t_ln.group_matrix, t_nm.group_matrix)
        A_res = int(np.max(np.abs(t_lm.group_matrix - P)))
        b_res = float(np.max(np.abs(t_lm.b - (t_ln.b + t_ln.group_matrix @ t_nm.b))))
        c_res = float(np.max(np.abs(t_lm.c - (t_nm.A @ t_ln.c + t_nm.c))))
        report.cocycles.append(CocycleCheck((lam, nu, mu), A_res, c_res, b_res))
    return report
