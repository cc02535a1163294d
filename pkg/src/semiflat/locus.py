"""The base locus ``B(V)``: level sets of the moment map and their natural parametrization.

In a chart, ``B(V)`` is ``{x : <grad K(x), zeta^j> = <a, zeta^j>}``; it is
parametrized by ``u -> (grad K)^{-1}(Xi u + a)``.  Tangent fields ``Y`` on the
locus are stored node-wise with their ``u``-derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .atlas import (
    SPD_THRESHOLD,
    Atlas,
    Box,
    Chart,
    DegenerateMetricError,
    OutsideDomainError,
    TransitionMap,
    legendre_coords,
)
from .dsl import Expression
from .finite_diff import grid_gradient, grid_jets
from .sections import DualFrame, RationalAffineSubspace, dual_basis


class LocusError(ValueError):
    pass


class NewtonError(RuntimeError):
    def __init__(self, message: str, last_iterate=None, residual: float = float("nan"), node=None):
        super().__init__(message)
        self.last_iterate = None if last_iterate is None else np.asarray(last_iterate)
        self.residual = residual
        self.node = node


class LeftDomainError(NewtonError):
    """Every damped trial step left the chart box."""


def level_residuals(ch: Chart, S: RationalAffineSubspace, x) -> np.ndarray:
    """``f_j(x) = <grad K(x) - a, zeta^j>`` for ``j = k+1..m``."""
    dual = dual_basis(S)
    return (legendre_coords(ch, x) - S.a) @ dual.ZetaDual.T


def natural_param(
    ch: Chart,
    S: RationalAffineSubspace,
    u,
    x0=None,
    tol: float = 1e-12,
    max_iter: int = 50,
    max_halvings: int = 30,
) -> np.ndarray:
    """Solve ``grad K(x) = Xi u + a`` by damped Newton on the Hessian metric."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != S.k:
        raise ValueError(f"u must have length {S.k}")
    x0 = ch.domain.center if x0 is None else x0
    return natural_param_batch(ch, S, u[None], np.asarray(x0, dtype=float)[None], tol, max_iter, max_halvings)[0]


def natural_param_batch(
    ch: Chart,
    S: RationalAffineSubspace,
    U,
    X0,
    tol: float = 1e-12,
    max_iter: int = 50,
    max_halvings: int = 30,
) -> np.ndarray:
    """Independent damped Newton solves for each row of ``U`` seeded by the rows of ``X0``.

    Each point halves its own step until the residual decreases inside the box.
    Errors name the offending row in ``err.node``.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    x = np.array(X0, dtype=float, ndmin=2)
    ch.require_inside(x)
    target = U @ S.Xi.T + S.a
    active = np.arange(len(x))
    polished = np.zeros(len(x), dtype=bool)
    for _ in range(max_iter + 1):
        jet = ch.potential.jet(x[active], order=2)
        r = jet.gradient - target[active]
        rn = np.max(np.abs(r), axis=1)
        # converged points take one extra full step to reach rounding level
        keep = (rn > tol) | ~polished[active]
        active, r, rn, H = active[keep], r[keep], rn[keep], jet.hessian[keep]
        if active.size == 0:
            return x
        if _ == max_iter:
            if np.all(rn <= tol):
                return x
            active, rn = active[rn > tol], rn[rn > tol]
            break
        lam = np.linalg.eigvalsh(H)[:, 0]
        if lam.min() < SPD_THRESHOLD:
            bad = int(np.argmin(lam))
            raise DegenerateMetricError(
                f"Hessian of the potential on chart {ch.id!r} is not positive definite "
                f"at {x[active[bad]].tolist()} (min eigenvalue {lam[bad]:.3e})",
                float(lam[bad]),
            )
        step = np.linalg.solve(H, r[..., None])[..., 0]
        t = np.ones(active.size)
        pending = rn > tol
        polish = np.flatnonzero(~pending)
        if polish.size:
            trial = x[active[polish]] - step[polish]
            ok = np.atleast_1d(ch.domain.contains(trial))
            if ok.any():
                g = ch.potential.jet(trial[ok], order=1).gradient
                ok[ok] = np.max(np.abs(g - target[active[polish[ok]]]), axis=1) <= rn[polish[ok]]
            x[active[polish[ok]]] = trial[ok]
            polished[active[polish]] = True
        if not pending.any():
            continue
        outside = np.zeros(active.size, dtype=bool)
        for _h in range(max_halvings + 1):
            idx = np.flatnonzero(pending)
            trial = x[active[idx]] - t[idx, None] * step[idx]
            inside = np.atleast_1d(ch.domain.contains(trial))
            outside[idx] = ~inside
            ok = np.zeros(idx.size, dtype=bool)
            if inside.any():
                ins = idx[inside]
                g = ch.potential.jet(trial[inside], order=1).gradient
                rn_trial = np.max(np.abs(g - target[active[ins]]), axis=1)
                better = rn_trial < rn[ins]
                ok[np.flatnonzero(inside)[better]] = True
            acc = idx[ok]
            x[active[acc]] = trial[ok]
            pending[acc] = False
            if not pending.any():
                break
            t[pending] *= 0.5
        else:
            bad = int(np.flatnonzero(pending)[0])
            cls = LeftDomainError if outside[bad] else NewtonError
            why = "iterate left the chart domain" if outside[bad] else "residual stopped decreasing"
            err = cls(
                f"Newton inversion failed for u={U[active[bad]].tolist()}: {why} (residual {rn[bad]:.3e})",
                x[active[bad]],
                float(rn[bad]),
            )
            err.node = int(active[bad])
            raise err
    bad = int(active[0])
    err = NewtonError(
        f"Newton inversion did not converge in {max_iter} iterations for u={U[bad].tolist()}",
        x[bad],
        float(np.max(np.abs(ch.potential.jet(x[bad], order=1).gradient - target[bad]))),
    )
    err.node = bad
    raise err


@dataclass(eq=False)
class BaseLocusPatch:
    """Natural parametrization sampled on a rectangular ``u`` grid (lexicographic node order)."""

    chart: Chart
    S: RationalAffineSubspace
    dual: DualFrame
    u_box: Box
    shape: tuple[int, ...]
    u: np.ndarray  # (N, k)
    x: np.ndarray  # (N, m)
    moment: np.ndarray  # (N, m), grad K at x
    hessian: np.ndarray  # (N, m, m)
    third: np.ndarray  # (N, m, m, m)
    dx_du: np.ndarray  # (N, m, k)
    d2x_du2: np.ndarray  # (N, m, k, k)

    @property
    def k(self) -> int:
        return self.S.k

    @property
    def m(self) -> int:
        return self.S.m

    @property
    def n_nodes(self) -> int:
        return self.u.shape[0]

    @property
    def h(self) -> np.ndarray:
        return (self.u_box.hi - self.u_box.lo) / (np.asarray(self.shape) - 1)

    @property
    def induced_metric(self) -> np.ndarray:
        """``G = Xi^T dx/du = Xi^T H^{-1} Xi``, the pullback of the Hessian metric."""
        return np.einsum("la,nlb->nab", self.S.Xi, self.dx_du)

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.k] = True
        return mask.reshape(-1)

    def flat_index(self, idx: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def level_residual(self) -> float:
        return float(np.max(np.abs((self.moment - self.S.a) @ self.dual.ZetaDual.T), initial=0.0))

    def implicit_residual(self) -> float:
        """``max |Hess K . dx/du - Xi|`` over nodes."""
        return float(np.max(np.abs(self.hessian @ self.dx_du - self.S.Xi)))


def _grid_axes(u_box: Box, shape: Sequence[int]) -> list[np.ndarray]:
    return [np.linspace(lo, hi, n) for lo, hi, n in zip(u_box.lo, u_box.hi, shape)]


def _continue_grid(ch: Chart, S: RationalAffineSubspace, U: np.ndarray, seed: np.ndarray) -> np.ndarray:
    """Lexicographic continuation: node ``idx`` is seeded by ``idx`` with its last nonzero entry decremented.

    The slice with last index 0 is solved recursively; each later slice along
    the last axis is solved as one batch seeded by the previous slice.
    """
    shape = U.shape[:-1]
    out = np.empty(shape + (S.m,))
    if len(shape) == 1:
        for i in range(shape[0]):
            out[i] = _solve_nodes(ch, S, U[i : i + 1], (seed if i == 0 else out[i - 1])[None], [(i,)])[0]
        return out
    out[..., 0, :] = _continue_grid(ch, S, U[..., 0, :], seed)
    lead = list(np.ndindex(*shape[:-1]))
    for j in range(1, shape[-1]):
        sl = _solve_nodes(
            ch, S, U[..., j, :].reshape(-1, S.k), out[..., j - 1, :].reshape(-1, S.m), [n + (j,) for n in lead]
        )
        out[..., j, :] = sl.reshape(shape[:-1] + (S.m,))
    return out


def _solve_nodes(ch, S, U, X0, nodes) -> np.ndarray:
    try:
        return natural_param_batch(ch, S, U, X0)
    except NewtonError as err:
        if isinstance(err.node, int):
            err.node = tuple(int(i) for i in nodes[err.node])
            err.args = (f"node {err.node}: {err.args[0]}",)
        raise


def build_patch(
    ch: Chart,
    S: RationalAffineSubspace,
    u_box: Box,
    resolution: int | Sequence[int] = 65,
    x0=None,
    margin: float = 0.0,
) -> BaseLocusPatch:
    """Solve the natural parametrization on a grid by continuation, then attach jets."""
    k, m = S.k, S.m
    if k == 0:
        raise LocusError("point loci (k = 0) are not supported")
    if m != ch.m:
        raise LocusError(f"subspace has m={m}, chart has m={ch.m}")
    if u_box.dim != k:
        raise LocusError(f"u box has dimension {u_box.dim}, expected k={k}")
    dual = dual_basis(S)
    shape = (int(resolution),) * k if np.ndim(resolution) == 0 else tuple(int(r) for r in resolution)
    if len(shape) != k or min(shape) < 2:
        raise LocusError(f"resolution must give at least 2 nodes on each of {k} axes")
    axes = _grid_axes(u_box, shape)
    inner = ch.domain.shrink(margin)

    U = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    seed = ch.domain.center if x0 is None else np.asarray(x0, dtype=float)
    sol = _continue_grid(ch, S, U, seed)
    bad = ~np.atleast_1d(inner.contains(sol.reshape(-1, m)))
    if bad.any():
        idx = np.unravel_index(int(np.flatnonzero(bad)[0]), shape)
        raise LocusError(
            f"node {tuple(int(i) for i in idx)}: x(u)={sol[idx].tolist()} is within the margin "
            f"{margin} of the chart boundary"
        )

    X = sol.reshape(-1, m)
    U = U.reshape(-1, k)
    jet = ch.potential.jet(X, order=3)
    H, T = jet.hessian, jet.third
    dx = np.linalg.solve(H, np.broadcast_to(S.Xi.astype(float), (len(X), m, k)))
    # differentiate H(x(u)) dx/du = Xi:  H d2x_ij = -T(., dx_i, dx_j)
    rhs = np.einsum("nabc,nbi,ncj->naij", T, dx, dx)
    d2x = -np.linalg.solve(H, rhs.reshape(len(X), m, k * k)).reshape(len(X), m, k, k)
    return BaseLocusPatch(ch, S, dual, u_box, shape, U, X, jet.gradient, H, T, dx, d2x)


# --- tangent fields --------------------------------------------------------------


@dataclass(eq=False)
class TangentFieldY:
    """Vector field ``Y = sum Y^l d/dx_l`` along the patch nodes with ``dY/du``."""

    mode: str  # gradient | explicit | normal | zero | values
    Y: np.ndarray  # (N, m)
    dY_du: np.ndarray  # (N, m, k)
    exact: bool = True
    label: str = ""


def gradient_from_jets(patch: BaseLocusPatch, g: np.ndarray, hf: np.ndarray):
    """``Y = dx/du G^{-1} grad f`` and its ``u``-derivative."""
    G = patch.induced_metric
    Ginv = np.linalg.inv(G)
    c = np.einsum("nab,nb->na", Ginv, g)
    dx, d2x = patch.dx_du, patch.d2x_du2
    dG = np.einsum("la,nlbi->nabi", patch.S.Xi, d2x)
    dc = np.einsum("nab,nbi->nai", Ginv, hf - np.einsum("nabi,nb->nai", dG, c))
    Y = np.einsum("nla,na->nl", dx, c)
    dY = np.einsum("nlbi,nb->nli", d2x, c) + np.einsum("nlb,nbi->nli", dx, dc)
    return Y, dY


def gradient_field(patch: BaseLocusPatch, f: Expression) -> TangentFieldY:
    """Metric gradient of ``f(u)`` on the locus; ``<Xi_j, Y> = df/du^j``."""
    if f.dim != patch.k:
        raise ValueError(f"potential f must be a function of {patch.k} variables")
    jet = f.jet(patch.u, order=2)
    Y, dY = gradient_from_jets(patch, jet.gradient, jet.hessian)
    return TangentFieldY("gradient", Y, dY, True, f.source)


def gradient_field_from_values(patch: BaseLocusPatch, fvals) -> TangentFieldY:
    """As :func:`gradient_field`, with ``grad f`` and ``Hess f`` from grid differences."""
    fgrid = np.asarray(fvals, dtype=float).reshape(patch.shape)
    g, hf = grid_jets(fgrid, patch.h)
    Y, dY = gradient_from_jets(patch, g.reshape(-1, patch.k), hf.reshape(-1, patch.k, patch.k))
    return TangentFieldY("gradient", Y, dY, False, "grid values")


def explicit_field(patch: BaseLocusPatch, components: Sequence[Expression]) -> TangentFieldY:
    if len(components) != patch.m:
        raise ValueError(f"explicit field needs {patch.m} components, got {len(components)}")
    Y = np.empty((patch.n_nodes, patch.m))
    dY = np.empty((patch.n_nodes, patch.m, patch.k))
    for l, e in enumerate(components):
        if e.dim != patch.k:
            raise ValueError("field components must be functions of u")
        jet = e.jet(patch.u, order=1)
        Y[:, l] = jet.value
        dY[:, l, :] = jet.gradient
    return TangentFieldY("explicit", Y, dY, True, ", ".join(e.source for e in components))


def normal_field(patch: BaseLocusPatch, coefficients: Sequence[Expression]) -> TangentFieldY:
    """``Y = sum phi_j Theta(zeta^j)``, the components of ``zeta^j`` read as a vector."""
    Zd = patch.dual.ZetaDual
    if len(coefficients) != Zd.shape[0]:
        raise ValueError(f"normal field needs {Zd.shape[0]} coefficients")
    phi = np.empty((patch.n_nodes, Zd.shape[0]))
    dphi = np.empty((patch.n_nodes, Zd.shape[0], patch.k))
    for j, e in enumerate(coefficients):
        jet = e.jet(patch.u, order=1)
        phi[:, j] = jet.value
        dphi[:, j, :] = jet.gradient
    Y = phi @ Zd
    dY = np.einsum("jl,nji->nli", Zd, dphi)
    return TangentFieldY("normal", Y, dY, True, ", ".join(e.source for e in coefficients))


def zero_field(patch: BaseLocusPatch) -> TangentFieldY:
    return TangentFieldY("zero", np.zeros((patch.n_nodes, patch.m)), np.zeros((patch.n_nodes, patch.m, patch.k)))


def field_from_values(patch: BaseLocusPatch, Yvals) -> TangentFieldY:
    """Node values of ``Y``; derivatives from grid differences."""
    Y = np.asarray(Yvals, dtype=float).reshape(patch.n_nodes, patch.m)
    dY = grid_gradient(Y.reshape(patch.shape + (patch.m,)), patch.h, patch.k)
    return TangentFieldY("values", Y, dY.reshape(patch.n_nodes, patch.m, patch.k), False, "grid values")


def tangency_residual(patch: BaseLocusPatch, Y: TangentFieldY) -> float:
    """``max |g(Y, Theta(zeta^j))|``; zero iff ``Y`` is tangent to the locus."""
    HY = np.einsum("nab,nb->na", patch.hessian, Y.Y)
    return float(np.max(np.abs(HY @ patch.dual.ZetaDual.T), initial=0.0))


# --- gluing across charts -------------------------------------------------------------


def locus_samples(ch: Chart, S: RationalAffineSubspace, points) -> np.ndarray:
    """Project sample points onto the locus: keep their ``u``-coordinates, solve for ``x``."""
    dual = dual_basis(S)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty_like(pts)
    for n, p in enumerate(pts):
        u0 = dual.XiDual @ (legendre_coords(ch, p) - S.a)
        out[n] = natural_param(ch, S, u0, p)
    return out


@dataclass
class GlueReport:
    source: str
    target: str
    samples: int
    forward: list[list[float]] = field(default_factory=list)
    backward: list[list[float]] = field(default_factory=list)

    @property
    def forward_residual(self) -> float:
        return float(np.max(np.abs(self.forward), initial=0.0))

    @property
    def backward_residual(self) -> float:
        return float(np.max(np.abs(self.backward), initial=0.0))

    def ok(self, tol: float = 1e-10) -> bool:
        return self.forward_residual <= tol and self.backward_residual <= tol


def glue_check(
    atlas: Atlas,
    t: TransitionMap,
    S_src: RationalAffineSubspace,
    S_dst: RationalAffineSubspace,
    samples,
) -> GlueReport:
    """Check that the locus in the source chart maps into the locus in the target chart and back.

    ``samples`` are source-chart points in the overlap.  They are projected onto
    the source locus for the forward direction; their images are projected onto
    the target locus for the backward direction.  Residuals are signed.
    """
    src, dst = atlas.chart(t.source), atlas.chart(t.target)
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    for p in pts:
        if not src.domain.contains(p) or (t.overlap is not None and not t.overlap.contains(p)):
            raise OutsideDomainError(f"glue sample {p.tolist()} is outside the overlap", p)
        if not dst.domain.contains(t.apply(p)):
            raise OutsideDomainError(f"glue sample {p.tolist()} maps outside chart {t.target!r}", p)
    on_src = locus_samples(src, S_src, pts)
    forward = level_residuals(dst, S_dst, t.apply(on_src))
    on_dst = locus_samples(dst, S_dst, t.apply(pts))
    backward = level_residuals(src, S_src, t.apply_inverse(on_dst))
    return GlueReport(t.source, t.target, len(pts), forward.tolist(), backward.tolist())
