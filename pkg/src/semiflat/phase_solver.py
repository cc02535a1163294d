"""Newton solver for the phase equation ``arg det[W(u) | Z] = theta0`` with ``Y = grad f``.

Unknowns are the interior grid values of ``f``; boundary values are fixed.
Derivatives of ``f`` use the compact central stencils, so the residual at a
node depends on ``f`` only through ``grad f`` and ``Hess f`` there.  The
Jacobian combines forward-difference sensitivities to those local quantities
with the exact stencil weights and is solved sparsely.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .angles import wrap
from .finite_diff import grid_jets
from .locus import BaseLocusPatch, TangentFieldY, gradient_from_jets, gradient_field_from_values
from .lagrangian import DegenerateImmersionError, phase_matrices


class ZeroResultantError(ArithmeticError):
    """Phases cancel out; no circular mean exists."""


class PhaseSolverError(RuntimeError):
    def __init__(self, message: str, f=None, history=None):
        super().__init__(message)
        self.f = f
        self.history = history or []


class BranchJumpError(PhaseSolverError):
    pass


class SingularJacobianError(PhaseSolverError):
    pass


def estimate_theta(phases) -> float:
    """Circular mean of node phases (argument of the summed unit phasors)."""
    phases = np.asarray(phases, dtype=float).reshape(-1)
    z = np.exp(1j * phases).sum()
    if phases.size == 0 or abs(z) <= 1e-12 * phases.size:
        raise ZeroResultantError("node phases have zero resultant; no representative phase")
    return float(np.angle(z))


@dataclass(eq=False)
class PhaseProblem:
    patch: BaseLocusPatch
    theta0: float
    boundary: np.ndarray  # full-grid f values; only boundary nodes are used
    tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 30
    fd_scale: float = 1e-6
    branch_guard: float = np.pi / 2

    def __post_init__(self):
        b = np.asarray(self.boundary, dtype=float).reshape(-1)
        if b.size != self.patch.n_nodes:
            raise ValueError(f"boundary data must have one value per node ({self.patch.n_nodes})")
        if not np.all(np.isfinite(b[~self.patch.interior_mask()])):
            raise ValueError("boundary data must be finite on every boundary node")
        if min(self.patch.shape) < 4:
            raise ValueError("the phase solver needs at least 4 nodes per axis")
        self.boundary = b


def initial_guess(problem: PhaseProblem) -> np.ndarray:
    """Linear interpolation (k = 1) or a Coons patch (k = 2) of the boundary data."""
    patch = problem.patch
    g = problem.boundary.reshape(patch.shape)
    if patch.k == 1:
        s = np.linspace(0.0, 1.0, patch.shape[0])
        return (1 - s) * g[0] + s * g[-1]
    if patch.k == 2:
        s = np.linspace(0.0, 1.0, patch.shape[0])[:, None]
        t = np.linspace(0.0, 1.0, patch.shape[1])[None, :]
        ruled_s = (1 - s) * g[0:1, :] + s * g[-1:, :]
        ruled_t = (1 - t) * g[:, 0:1] + t * g[:, -1:]
        corners = (
            (1 - s) * (1 - t) * g[0, 0] + s * (1 - t) * g[-1, 0] + (1 - s) * t * g[0, -1] + s * t * g[-1, -1]
        )
        return (ruled_s + ruled_t - corners).reshape(-1)
    raise ValueError("the phase solver supports k = 1 and k = 2")


def field_of(patch: BaseLocusPatch, f: np.ndarray) -> TangentFieldY:
    """``Y = grad f`` through the induced metric, with grid derivatives of ``f``."""
    return gradient_field_from_values(patch, f)


def _residual_from_jets(patch: BaseLocusPatch, g: np.ndarray, hf: np.ndarray, theta0: float):
    Y, dY = gradient_from_jets(patch, g, hf)
    pm = phase_matrices(patch, TangentFieldY("gradient", Y, dY, False), unwrap=False)
    return wrap(pm.phase - theta0), pm.phase


def _jets_of(patch: BaseLocusPatch, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g, hf = grid_jets(np.asarray(f, dtype=float).reshape(patch.shape), patch.h)
    return g.reshape(-1, patch.k), hf.reshape(-1, patch.k, patch.k)


def phase_residual(patch: BaseLocusPatch, f: np.ndarray, theta0: float) -> tuple[np.ndarray, np.ndarray]:
    """``wrap(arg det[W|Z] - theta0)`` at every node, plus the principal phases.

    Goes through the same ``W`` assembly as :func:`semiflat.lagrangian.phase_matrices`.
    """
    g, hf = _jets_of(patch, f)
    return _residual_from_jets(patch, g, hf, theta0)


@dataclass
class PhaseSolution:
    f: np.ndarray  # (N,) full grid
    Y: TangentFieldY
    converged: bool
    iterations: int
    residual: float  # max interior |wrap(phase - theta0)|
    history: list[float] = field(default_factory=list)
    phase: np.ndarray | None = None


def _stencils(k: int, h: np.ndarray):
    """Weights of the compact stencils: ``(kind, a, b, offset, weight)``."""
    out = []
    for a in range(k):
        e = np.zeros(k, dtype=int)
        e[a] = 1
        out.append(("g", a, a, tuple(e), 0.5 / h[a]))
        out.append(("g", a, a, tuple(-e), -0.5 / h[a]))
        out.append(("H", a, a, tuple(e), 1.0 / h[a] ** 2))
        out.append(("H", a, a, tuple(-e), 1.0 / h[a] ** 2))
        out.append(("H", a, a, (0,) * k, -2.0 / h[a] ** 2))
        for b in range(a + 1, k):
            for sa, sb in itertools.product((1, -1), repeat=2):
                off = np.zeros(k, dtype=int)
                off[a], off[b] = sa, sb
                out.append(("H", a, b, tuple(off), sa * sb * 0.25 / (h[a] * h[b])))
    return out


def _jacobian(problem: PhaseProblem, f: np.ndarray, r0: np.ndarray, interior: np.ndarray) -> sp.csr_matrix:
    """Chain rule through the node-local derivatives of ``f``.

    Sensitivities of the residual to ``grad f`` and ``Hess f`` come from forward
    differences (all nodes at once, since they decouple); the stencil weights are exact.
    """
    patch = problem.patch
    shape, k = patch.shape, patch.k
    g0, h0 = _jets_of(patch, f)
    dg = np.empty((patch.n_nodes, k))
    dH = np.empty((patch.n_nodes, k, k))
    for a in range(k):
        step = problem.fd_scale * (1.0 + np.abs(g0[:, a]))
        g1 = g0.copy()
        g1[:, a] += step
        dg[:, a] = wrap(_residual_from_jets(patch, g1, h0, problem.theta0)[0] - r0) / step
        for b in range(a, k):
            step = problem.fd_scale * (1.0 + np.abs(h0[:, a, b]))
            h1 = h0.copy()
            h1[:, a, b] += step
            if b != a:
                h1[:, b, a] += step
            dH[:, a, b] = dH[:, b, a] = wrap(_residual_from_jets(patch, g0, h1, problem.theta0)[0] - r0) / step

    unknowns = np.flatnonzero(interior)
    col_of = -np.ones(patch.n_nodes, dtype=int)
    col_of[unknowns] = np.arange(unknowns.size)
    grid_idx = np.indices(shape).reshape(k, -1).T[unknowns]
    rows, cols, vals = [], [], []
    for kind, a, b, offset, weight in _stencils(k, patch.h):
        q = unknowns
        p = np.ravel_multi_index(tuple((grid_idx + np.asarray(offset)).T), shape)
        keep = interior[p]
        sens = dg[q, a] if kind == "g" else dH[q, a, b]
        rows.append(col_of[q[keep]])
        cols.append(col_of[p[keep]])
        vals.append(sens[keep] * weight)
    n = unknowns.size
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def solve_phase(problem: PhaseProblem, f0=None) -> PhaseSolution:
    """Damped Newton on the interior values of ``f``.

    A step is accepted when the residual 2-norm decreases and no node phase
    moves by more than ``branch_guard``; otherwise it is halved.
    """
    patch = problem.patch
    interior = patch.interior_mask()
    f = initial_guess(problem) if f0 is None else np.asarray(f0, dtype=float).reshape(-1).copy()
    f[~interior] = problem.boundary[~interior]
    history: list[float] = []
    try:
        r, phase = phase_residual(patch, f, problem.theta0)
    except DegenerateImmersionError as err:
        raise PhaseSolverError(f"initial guess is degenerate: {err}", f, history) from err
    rn = float(np.max(np.abs(r[interior])))
    history.append(rn)
    it = 0
    while rn > problem.tol and it < problem.max_iter:
        J = _jacobian(problem, f, r, interior)
        with np.errstate(all="ignore"):
            try:
                step = spla.spsolve(J.tocsc(), -r[interior])
            except RuntimeError as err:
                raise SingularJacobianError(f"Jacobian solve failed: {err}", f, history) from err
        if not np.all(np.isfinite(step)):
            raise SingularJacobianError("Jacobian is singular", f, history)
        norm0 = float(np.linalg.norm(r[interior]))
        t, accepted, jumped = 1.0, False, False
        for _ in range(problem.max_halvings + 1):
            trial = f.copy()
            trial[interior] += t * step
            try:
                r_new, phase_new = phase_residual(patch, trial, problem.theta0)
            except DegenerateImmersionError:
                t *= 0.5
                continue
            jump = float(np.max(np.abs(wrap(phase_new - phase)[interior])))
            if jump > problem.branch_guard:
                jumped = True
            elif np.linalg.norm(r_new[interior]) < norm0:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            cls = BranchJumpError if jumped else PhaseSolverError
            why = "every damped step jumped phase branches" if jumped else "residual stopped decreasing"
            raise cls(f"phase solver stalled at iteration {it + 1}: {why} (residual {rn:.3e})", f, history)
        f, r, phase = trial, r_new, phase_new
        rn = float(np.max(np.abs(r[interior])))
        history.append(rn)
        it += 1
    return PhaseSolution(f, field_of(patch, f), rn <= problem.tol, it, rn, history, phase)
