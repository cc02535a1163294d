"""The complex side: the submanifold ``C(V)``, the connection ``D^Y`` and the dHYM test.

On ``C(V)`` the holomorphic coordinates are ``w = u + i v`` with
``x~ = Xi u + a`` and ``y~ = Xi v``.  The connection is
``D^Y = d + i sum Y_j dy~_j``; its curvature has coefficients
``F[i, l] = d<xi_l, Y>/du^i`` on ``du^i ^ dv^l``.  With ``G = Xi^T H^{-1} Xi``
the form ``omega~ + F`` has coefficient matrix ``B = G + i F = W^T Xi``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .angles import circular_distance, wrap
from .atlas import Atlas, OutsideDomainError, TransitionMap
from .intlinalg import int_det, int_inverse, int_matmul
from .lagrangian import PhaseMatrices, phase_matrices
from .locus import BaseLocusPatch, TangentFieldY
from .sections import RationalAffineSubspace


class SingularBError(ArithmeticError):
    pass


# --- coordinates -----------------------------------------------------------------------


@dataclass
class MirrorCoords:
    u: np.ndarray
    v: np.ndarray
    xtilde: np.ndarray  # (m,)
    ytilde: np.ndarray  # (m,)
    xtilde_jac: np.ndarray  # (m, k), d x~ / du
    ytilde_jac: np.ndarray  # (m, k), d y~ / dv
    cr_residual: float  # |Hess K dx/du - Xi| at the node


def mirror_coords(patch: BaseLocusPatch, node: int, v=None) -> MirrorCoords:
    """Holomorphic coordinates at ``(u_node, v)``; the Cauchy-Riemann data is checked against the patch."""
    if not 0 <= node < patch.n_nodes:
        raise IndexError(f"node {node} outside the patch grid")
    S = patch.S
    u = patch.u[node]
    v = np.zeros(patch.k) if v is None else np.asarray(v, dtype=float).reshape(-1)
    if v.size != patch.k:
        raise ValueError(f"v must have length {patch.k}")
    Xi = S.Xi.astype(float)
    cr = float(np.max(np.abs(patch.hessian[node] @ patch.dx_du[node] - Xi)))
    return MirrorCoords(u, v, Xi @ u + S.a, Xi @ v, Xi.copy(), Xi.copy(), cr)


def cr_residual(patch: BaseLocusPatch) -> float:
    """``d x~/du`` from the patch (``Hess K dx/du``) against ``Xi``; ``d y~/dv = Xi`` holds by construction."""
    return patch.implicit_residual()


# --- connection and curvature ----------------------------------------------------------


def connection_coefficients(patch: BaseLocusPatch, Y: TangentFieldY) -> np.ndarray:
    """Coefficients of ``sum Y_j dy~_j`` on ``dv^i``: ``<xi_i, Y>``, shape (N, k)."""
    return Y.Y @ patch.S.Xi


def curvature(patch: BaseLocusPatch, Y: TangentFieldY) -> tuple[np.ndarray, np.ndarray]:
    """``F[i, l] = d<xi_l, Y>/du^i`` and ``F02 = (F - F^T) / 2``, each (N, k, k)."""
    F = np.einsum("nli,la->nia", Y.dY_du, patch.S.Xi)
    return F, 0.5 * (F - np.swapaxes(F, 1, 2))


def f02_residual(patch: BaseLocusPatch, Y: TangentFieldY) -> float:
    """Largest ``(0,2)``-curvature coefficient; zero iff ``D^Y`` is integrable."""
    return float(np.max(np.abs(curvature(patch, Y)[1]), initial=0.0))


def mirror_cross_residual(patch: BaseLocusPatch, Y: TangentFieldY, deta: np.ndarray) -> float:
    """``F - F^T = -deta``; returns the maximal violation."""
    F, _ = curvature(patch, Y)
    gap = np.abs((F - np.swapaxes(F, 1, 2)) + deta)
    if not Y.exact:
        gap = gap[patch.interior_mask()]
    return float(np.max(gap, initial=0.0))


@dataclass
class TrivialityReport:
    trivial: bool
    connection_residual: float  # max |<xi_i, Y>|
    orthogonality_residual: float  # max |g(Y, dx/du^i)|
    agree: bool


def triviality_check(patch: BaseLocusPatch, Y: TangentFieldY, tol: float = 1e-10) -> TrivialityReport:
    """``D^Y = d`` on ``C(V)`` iff ``Y`` is ``g``-orthogonal to the locus."""
    conn = float(np.max(np.abs(connection_coefficients(patch, Y)), initial=0.0))
    orth = float(np.max(np.abs(np.einsum("np,npq,nqi->ni", Y.Y, patch.hessian, patch.dx_du)), initial=0.0))
    return TrivialityReport(conn <= tol, conn, orth, (conn <= tol) == (orth <= tol))


@dataclass
class TransportReport:
    source: str
    target: str
    samples: int
    form_residual: float  # |sum Y_j w_j| mismatch on transported test vectors
    vector_residual: float  # |A^{-1} Y_target - Y_source|


def connection_transport_check(
    atlas: Atlas,
    t: TransitionMap,
    points,
    Y_source,
    Y_target=None,
    tests=None,
    seed: int = 0,
) -> TransportReport:
    """Evaluate ``sum Y_j dy~_j`` in both charts on transported fibre vectors.

    Vectors move by ``Y^target = A Y^source``, fibre covector coordinates by
    ``w^target = A^{-T} w^source``.  ``Y_target`` defaults to the transported field.
    """
    src, dst = atlas.chart(t.source), atlas.chart(t.target)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    for p in pts:
        if not src.domain.contains(p) or (t.overlap is not None and not t.overlap.contains(p)):
            raise OutsideDomainError(f"transport sample {p.tolist()} is outside the overlap", p)
        if not dst.domain.contains(t.apply(p)):
            raise OutsideDomainError(f"transport sample {p.tolist()} maps outside chart {t.target!r}", p)
    Ys = np.atleast_2d(np.asarray(Y_source, dtype=float))
    Yt = Ys @ t.A.T if Y_target is None else np.atleast_2d(np.asarray(Y_target, dtype=float))
    if tests is None:
        tests = np.random.default_rng(seed).standard_normal((4, t.m))
    tests = np.atleast_2d(np.asarray(tests, dtype=float))
    Ainv = int_inverse(t.A)
    w_t = tests @ Ainv  # rows of A^{-T} w
    form = np.abs(Ys @ tests.T - Yt @ w_t.T)
    vec = np.abs(Yt @ Ainv.T - Ys)
    return TransportReport(t.source, t.target, len(pts), float(form.max()), float(vec.max()))


# --- Kahler form and the dHYM test -------------------------------------------------------


@dataclass
class OmegaTilde:
    canonical: np.ndarray  # (N, k, k), pullback of sum dx_i ^ dy~_i
    inverse_hessian: np.ndarray  # (N, k, k), sum K^{ij} dx~_i ^ dy~_j
    consistency: float
    min_eigenvalue: float


def omega_tilde(patch: BaseLocusPatch) -> OmegaTilde:
    Xi = patch.S.Xi.astype(float)
    canonical = np.einsum("nla,lb->nab", patch.dx_du, Xi)
    Hinv = np.linalg.inv(patch.hessian)
    via_inv = np.einsum("la,nlp,pb->nab", Xi, Hinv, Xi)
    sym = 0.5 * (via_inv + np.swapaxes(via_inv, 1, 2))
    return OmegaTilde(
        canonical,
        via_inv,
        float(np.max(np.abs(canonical - via_inv))),
        float(np.linalg.eigvalsh(sym).min()),
    )


def b_matrix(patch: BaseLocusPatch, Y: TangentFieldY, pm: PhaseMatrices | None = None) -> np.ndarray:
    """``b_ij = sum_l <xi_j, e^l> c_i^l``, i.e. ``B = W^T Xi`` (N, k, k)."""
    pm = phase_matrices(patch, Y) if pm is None else pm
    return np.einsum("nli,lj->nij", pm.Wmat, patch.S.Xi)


def frame_constant(S: RationalAffineSubspace) -> Fraction:
    """``det[X|Z] / det(Z^T Z)`` with ``Z`` the dual normal columns; exact."""
    Zmat = int_inverse(S.frame)[S.k:].T
    num = int_det(np.hstack([S.Xi, Zmat]))
    den = int_det(int_matmul(Zmat.T, Zmat)) if Zmat.shape[1] else 1
    return Fraction(num, den)


def top_power_bruteforce(B: np.ndarray) -> complex:
    """Coefficient of ``(omega~ + F)^k`` on ``du^1 ^ dv^1 ^ ... ^ du^k ^ dv^k``.

    The form is ``(i/2) sum B_ij dw^i ^ dw-bar^j``.  Its k-th power is expanded
    over permutations on the basis ``(dw^1..dw^k, dw-bar^1..dw-bar^k)`` and then
    converted to the real volume form.
    """
    k = B.shape[0]
    n = 2 * k
    Om = np.zeros((n, n), dtype=complex)
    Om[:k, k:] = 0.5j * B
    Om[k:, :k] = -0.5j * B.T
    total = 0j
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        term = 1.0 + 0j
        for p in range(k):
            term *= Om[perm[2 * p], perm[2 * p + 1]]
        total += -term if inv % 2 else term
    # sum over permutations counts each pairing 2^k k! times; the k-th power carries k!
    coeff_dw = total / 2**k
    # dW ^ dW-bar = (-1)^{k(k-1)/2} (-2i)^k du^1 ^ dv^1 ^ ... ^ du^k ^ dv^k
    return coeff_dw * (-1) ** (k * (k - 1) // 2) * (-2j) ** k


@dataclass
class DhymResult:
    residual: float  # max circular distance of arg(sign(kappa) det B) from theta0
    raw_residual: float  # same without the sign of kappa
    factorization_gap: float  # max |det B - kappa det[W|Z]|
    mod_pi_gap: float  # max distance of arg det B from arg det[W|Z] modulo pi
    top_power_gap: float  # max |brute-force top power - k! det B|
    oracle_residual: float  # max |Im(e^{-i theta0} top) / |top||
    kappa: float
    phases: np.ndarray  # arg(sign(kappa) det B) per node


def dhym_residual(
    patch: BaseLocusPatch,
    Y: TangentFieldY,
    theta0: float,
    pm: PhaseMatrices | None = None,
    oracle_nodes: int | None = None,
    mask=None,
) -> DhymResult:
    """dHYM phase test through ``det B``, with the factorization and top-power oracles.

    ``mask`` restricts every reported maximum to a subset of nodes.
    """
    pm = phase_matrices(patch, Y) if pm is None else pm
    B = b_matrix(patch, Y, pm)
    keep = np.ones(patch.n_nodes, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    detB = np.linalg.det(B)
    if np.any(np.abs(detB) <= 1e-14):
        node = int(np.flatnonzero(np.abs(detB) <= 1e-14)[0])
        raise SingularBError(f"B(u) is singular at node {node}")
    kappa = float(frame_constant(patch.S))
    sgn = 1.0 if kappa > 0 else -1.0
    phases = np.angle(sgn * detB)
    fact = float(np.max(np.abs(detB - kappa * pm.detWZ)[keep], initial=0.0))
    diff = np.angle(detB) - np.angle(pm.detWZ)
    mod_pi = float(np.max(np.abs(wrap(2.0 * diff) / 2.0)[keep], initial=0.0))
    k = patch.k
    idx = np.flatnonzero(keep)
    nodes = idx if oracle_nodes is None or idx.size <= oracle_nodes else idx[np.linspace(0, idx.size - 1, oracle_nodes).astype(int)]
    tp_gap, oracle = 0.0, 0.0
    rot = np.exp(-1j * theta0)
    for n in nodes:
        top = top_power_bruteforce(B[n])
        tp_gap = max(tp_gap, abs(top - math.factorial(k) * detB[n]))
        oracle = max(oracle, abs((rot * sgn * top).imag) / abs(top))
    return DhymResult(
        float(np.max(circular_distance(phases, theta0)[keep], initial=0.0)),
        float(np.max(circular_distance(np.angle(detB), theta0)[keep], initial=0.0)),
        fact,
        mod_pi,
        float(tp_gap),
        float(oracle),
        kappa,
        phases,
    )


@dataclass
class MirrorFrame:
    coords: MirrorCoords
    F_coeffs: np.ndarray
    F02: np.ndarray
    omega_tilde: np.ndarray
    Bu: np.ndarray
    dhym_phase: float


def mirror_frame(patch: BaseLocusPatch, Y: TangentFieldY, node: int, v=None) -> MirrorFrame:
    coords = mirror_coords(patch, node, v)
    F, F02 = curvature(patch, Y)
    B = b_matrix(patch, Y)
    sgn = 1.0 if frame_constant(patch.S) > 0 else -1.0
    return MirrorFrame(
        coords,
        F[node],
        F02[node],
        omega_tilde(patch).inverse_hessian[node].astype(complex),
        B[node],
        float(np.angle(sgn * np.linalg.det(B[node]))),
    )


def v_independence_residual(patch: BaseLocusPatch, Y: TangentFieldY, samples: int = 3, seed: int = 0) -> float:
    """Spot-check that curvature and ``B`` do not change along the torus fibre."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    nodes = np.linspace(0, patch.n_nodes - 1, min(5, patch.n_nodes)).astype(int)
    for n in nodes:
        base = mirror_frame(patch, Y, int(n))
        for _ in range(samples):
            other = mirror_frame(patch, Y, int(n), rng.uniform(0, 1, patch.k))
            worst = max(
                worst,
                float(np.max(np.abs(other.F_coeffs - base.F_coeffs), initial=0.0)),
                float(np.max(np.abs(other.Bu - base.Bu))),
            )
    return worst
