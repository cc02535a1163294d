"""The symplectic side: frames of the lift ``L(V, Y)``, the Lagrangian test and the phase.

Points of ``L(V, Y)`` over a chart are ``(x(u), Y(u) + sum t^j zeta^j) mod Z^m``.
Tangent vectors are pairs ``(x-part, y-part)`` of length ``2m``:

* ``W_j = (dx/du^j, dY/du^j)``
* ``Z_i = (0, zeta^i)``

The symplectic form is ``omega = sum K_ij dx_i ^ dy_j``, that is
``omega(a, b) = a_x . H b_y - a_y . H b_x``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .angles import circular_distance, unwrap_grid, wrap
from .finite_diff import grid_gradient
from .locus import BaseLocusPatch, TangentFieldY


class DegenerateImmersionError(ArithmeticError):
    """``det[W | Z]`` vanished at a node."""


class BoundaryNodeError(ValueError):
    pass


DET_FLOOR = 1e-14


def omega(a: np.ndarray, b: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``omega(a, b)`` for (batched) vectors of length ``2m`` and Hessians ``H``."""
    m = H.shape[-1]
    ax, ay = a[..., :m], a[..., m:]
    bx, by = b[..., :m], b[..., m:]
    return np.einsum("...i,...ij,...j->...", ax, H, by) - np.einsum("...i,...ij,...j->...", ay, H, bx)


def complex_structure(v: np.ndarray) -> np.ndarray:
    """``J d/dx = d/dy``, ``J d/dy = -d/dx``."""
    m = v.shape[-1] // 2
    return np.concatenate([-v[..., m:], v[..., :m]], axis=-1)


def tangent_vectors(patch: BaseLocusPatch, Y: TangentFieldY) -> tuple[np.ndarray, np.ndarray]:
    """``W`` with shape (N, k, 2m) and ``Z`` with shape (N, m-k, 2m)."""
    N, m, k = patch.n_nodes, patch.m, patch.k
    W = np.concatenate([np.swapaxes(patch.dx_du, 1, 2), np.swapaxes(Y.dY_du, 1, 2)], axis=-1)
    Zd = patch.dual.ZetaDual.astype(float)
    Z = np.concatenate([np.zeros((N, m - k, m)), np.broadcast_to(Zd, (N, m - k, m))], axis=-1)
    return W, Z


def omega_gram(patch: BaseLocusPatch, Y: TangentFieldY) -> np.ndarray:
    """Gram matrix of ``omega`` on ``W_1..W_k, Z_{k+1}..Z_m``, shape (N, m, m)."""
    W, Z = tangent_vectors(patch, Y)
    V = np.concatenate([W, Z], axis=1)
    H = patch.hessian[:, None, None]
    return omega(V[:, :, None, :], V[:, None, :, :], H)


def lagrangian_residual(patch: BaseLocusPatch, Y: TangentFieldY) -> float:
    """``max |omega(W_j, W_j')|`` over nodes and pairs."""
    k = patch.k
    return float(np.max(np.abs(omega_gram(patch, Y)[:, :k, :k])))


@dataclass
class StructuralZeros:
    wz: float
    zz: float
    antisymmetry: float


def structural_residual(patch: BaseLocusPatch, Y: TangentFieldY) -> StructuralZeros:
    """The ``W-Z`` and ``Z-Z`` blocks, which vanish for every ``Y``."""
    k = patch.k
    G = omega_gram(patch, Y)
    return StructuralZeros(
        float(np.max(np.abs(G[:, :k, k:]), initial=0.0)),
        float(np.max(np.abs(G[:, k:, k:]), initial=0.0)),
        float(np.max(np.abs(G + np.swapaxes(G, 1, 2)))),
    )


# --- eta and its exterior derivative ---------------------------------------------------


def eta_field(patch: BaseLocusPatch, Y: TangentFieldY) -> np.ndarray:
    """``eta_j = -sum K_il Y^i dx^l/du^j``, shape (N, k)."""
    return -np.einsum("ni,nil,nlj->nj", Y.Y, patch.hessian, patch.dx_du)


def eta_identity_residual(patch: BaseLocusPatch, Y: TangentFieldY) -> float:
    """``eta_j = -<xi_j, Y>`` follows from ``Hess K dx/du = Xi``."""
    return float(np.max(np.abs(eta_field(patch, Y) + Y.Y @ patch.S.Xi)))


def eta_derivatives(patch: BaseLocusPatch, Y: TangentFieldY) -> np.ndarray:
    """``D[n, a, b] = d eta_a / du^b``.

    Exact fields use the product rule with third derivatives of ``K``;
    grid-valued fields use central differences of ``eta``.
    """
    if not Y.exact:
        eta = eta_field(patch, Y).reshape(patch.shape + (patch.k,))
        return grid_gradient(eta, patch.h, patch.k).reshape(patch.n_nodes, patch.k, patch.k)
    H, T = patch.hessian, patch.third
    dx, d2x = patch.dx_du, patch.d2x_du2
    term_T = np.einsum("npqr,npb,nq,nra->nab", T, dx, Y.Y, dx)
    term_dY = np.einsum("npb,npq,nqa->nab", Y.dY_du, H, dx)
    term_d2x = np.einsum("np,npq,nqab->nab", Y.Y, H, d2x)
    return -(term_T + term_dY + term_d2x)


def deta_field(patch: BaseLocusPatch, Y: TangentFieldY) -> np.ndarray:
    """``deta[j, j'] = d eta_j' / du^j - d eta_j / du^j'``, shape (N, k, k)."""
    D = eta_derivatives(patch, Y)
    return np.swapaxes(D, 1, 2) - D


def eta_and_deta(patch: BaseLocusPatch, Y: TangentFieldY, node: int) -> tuple[np.ndarray, np.ndarray]:
    if not Y.exact and not patch.interior_mask()[node]:
        raise BoundaryNodeError(f"node {node} lies on the grid boundary; differences of eta need neighbours")
    return eta_field(patch, Y)[node], deta_field(patch, Y)[node]


def cross_identity_residual(patch: BaseLocusPatch, Y: TangentFieldY) -> float:
    """``max |omega(W_j, W_j') - deta_jj'|`` (interior nodes only for grid fields)."""
    k = patch.k
    gap = np.abs(omega_gram(patch, Y)[:, :k, :k] - deta_field(patch, Y))
    if not Y.exact:
        gap = gap[patch.interior_mask()]
    return float(np.max(gap, initial=0.0))


@dataclass
class LagrangianFrame:
    u: np.ndarray
    W_vectors: np.ndarray
    Z_vectors: np.ndarray
    omega_matrix: np.ndarray
    eta: np.ndarray
    deta: np.ndarray


def build_frame(patch: BaseLocusPatch, Y: TangentFieldY, node: int) -> LagrangianFrame:
    W, Z = tangent_vectors(patch, Y)
    eta, deta = eta_and_deta(patch, Y, node)
    return LagrangianFrame(patch.u[node], W[node], Z[node], omega_gram(patch, Y)[node], eta, deta)


# --- phase ----------------------------------------------------------------------------


@dataclass
class PhaseMatrices:
    Wmat: np.ndarray  # (N, m, k) complex, dx/du + i dY/du
    Zmat: np.ndarray  # (m, m-k) integer, columns zeta^j
    Xmat: np.ndarray  # (m, k) integer, columns xi_j
    detWZ: np.ndarray  # (N,) complex
    phase: np.ndarray  # (N,) principal value
    phase_unwrapped: np.ndarray  # (N,)

    @property
    def omega_phase(self) -> np.ndarray:
        """Phase of the pulled-back holomorphic volume form, ``i^(m-k) det[W|Z]``."""
        m, k = self.Xmat.shape
        return wrap(self.phase + (m - k) * np.pi / 2)


def phase_matrices(patch: BaseLocusPatch, Y: TangentFieldY, unwrap: bool = True) -> PhaseMatrices:
    Wmat = patch.dx_du + 1j * Y.dY_du
    Zmat = patch.dual.ZetaDual.T
    N = patch.n_nodes
    full = np.concatenate([Wmat, np.broadcast_to(Zmat.astype(complex), (N,) + Zmat.shape)], axis=2)
    det = np.linalg.det(full)
    small = np.abs(det) <= DET_FLOOR
    if small.any():
        node = int(np.flatnonzero(small)[0])
        raise DegenerateImmersionError(f"det[W|Z] vanishes at node {node} (u={patch.u[node].tolist()})")
    phase = np.angle(det)
    unwrapped = unwrap_grid(phase.reshape(patch.shape)).reshape(-1) if unwrap else phase
    return PhaseMatrices(Wmat, Zmat, patch.S.Xi, det, phase, unwrapped)


def slag_phase(pm: PhaseMatrices) -> np.ndarray:
    return pm.phase_unwrapped


def phase_residuals(pm: PhaseMatrices, theta0: float) -> np.ndarray:
    return circular_distance(pm.phase, theta0)


def slag_residual(patch: BaseLocusPatch, Y: TangentFieldY, theta0: float, mask=None) -> float:
    """``max |wrap(arg det[W|Z] - theta0)|`` over nodes (optionally a boolean node mask)."""
    res = phase_residuals(phase_matrices(patch, Y), theta0)
    return float(np.max(res if mask is None else res[mask], initial=0.0))


def _leibniz_det(M: np.ndarray) -> complex:
    n = M.shape[0]
    total = 0j
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        term = 1.0 + 0j
        for row, col in enumerate(perm):
            term *= M[row, col]
        total += -term if inv % 2 else term
    return total


def omega_pullback(patch: BaseLocusPatch, Y: TangentFieldY) -> np.ndarray:
    """``dz^1 ^ ... ^ dz^m (W_1..W_k, Z_{k+1}..Z_m)`` by brute-force expansion, ``z = x + i y``."""
    W, Z = tangent_vectors(patch, Y)
    V = np.concatenate([W, Z], axis=1)
    m = patch.m
    dz = V[..., :m] + 1j * V[..., m:]  # dz^l(v_c) laid out as (N, c, l)
    return np.array([_leibniz_det(d.T) for d in dz])


def omega_pullback_residual(patch: BaseLocusPatch, Y: TangentFieldY) -> float:
    pm = phase_matrices(patch, Y)
    expected = (1j ** (patch.m - patch.k)) * pm.detWZ
    return float(np.max(np.abs(omega_pullback(patch, Y) - expected)))


def kahler_compatibility_residual(patch: BaseLocusPatch, samples: int = 4, seed: int = 0) -> float:
    """``max |omega(a, J b) - g(a, b)|`` for random vectors, with ``g = H (+) H``."""
    rng = np.random.default_rng(seed)
    m = patch.m
    worst = 0.0
    for H in patch.hessian[:: max(1, patch.n_nodes // 16)]:
        for _ in range(samples):
            a, b = rng.standard_normal((2, 2 * m))
            g = a[:m] @ H @ b[:m] + a[m:] @ H @ b[m:]
            worst = max(worst, abs(float(omega(a, complex_structure(b), H)) - g))
    return worst


# --- the lift as a point set ----------------------------------------------------------


def lift_points(patch: BaseLocusPatch, Y: TangentFieldY, t) -> tuple[np.ndarray, np.ndarray]:
    """Points ``(x(u), Y(u) + sum t^j zeta^j mod 1)`` for fibre parameters ``t`` (T, m-k)."""
    t = np.atleast_2d(np.asarray(t, dtype=float))
    y = Y.Y[:, None, :] + (t @ patch.dual.ZetaDual)[None]
    return patch.x, np.mod(y, 1.0)


def lift_distance(patch: BaseLocusPatch, Y1: TangentFieldY, Y2: TangentFieldY, t) -> float:
    """Node-wise distance, on the torus, from points of ``L(V, Y1)`` to ``L(V, Y2)``.

    For each lift point ``y1`` the matching fibre parameter of the second lift is
    ``t' = Zeta^T (y1 - Y2)``; the residual is the torus distance between ``y1`` and
    ``Y2 + zeta . t'``.  Zero iff the two lifts coincide as subsets mod ``Z^m``.
    """
    _, y1 = lift_points(patch, Y1, t)
    d = y1 - Y2.Y[:, None, :]
    t2 = d @ patch.S.Zeta
    y2 = np.mod(Y2.Y[:, None, :] + t2 @ patch.dual.ZetaDual, 1.0)
    gap = np.mod(y1 - y2 + 0.5, 1.0) - 0.5
    return float(np.max(np.abs(gap), initial=0.0))
