import numpy as np
import pytest

from conftest import random_explicit, u_expr
from semiflat.lagrangian import (
    BoundaryNodeError,
    DegenerateImmersionError,
    build_frame,
    complex_structure,
    cross_identity_residual,
    deta_field,
    eta_and_deta,
    eta_field,
    eta_identity_residual,
    kahler_compatibility_residual,
    lagrangian_residual,
    lift_distance,
    omega,
    omega_gram,
    omega_pullback,
    omega_pullback_residual,
    phase_matrices,
    slag_phase,
    slag_residual,
    structural_residual,
)
from semiflat.locus import explicit_field, field_from_values, gradient_field, normal_field, zero_field

ROT = ["-u2", "u1"]


def rotation(patch):
    return explicit_field(patch, [u_expr(s, 2) for s in ROT])


def test_omega_basics():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    e = np.eye(4)
    # omega(d/dx_i, d/dy_j) = K_ij, and the x-x and y-y blocks vanish
    assert omega(e[0], e[3], H) == 0.5 and omega(e[0], e[1], H) == 0 and omega(e[2], e[3], H) == 0
    a, b = np.random.default_rng(0).standard_normal((2, 4))
    assert omega(a, b, H) == pytest.approx(-omega(b, a, H))
    np.testing.assert_array_equal(complex_structure(complex_structure(a)), -a)


def test_line_frame(line_patch):
    Y = gradient_field(line_patch, u_expr("u1^2/2", 1))
    fr = build_frame(line_patch, Y, 10)
    np.testing.assert_allclose(fr.W_vectors[0], [1, 0, 1, 0], atol=1e-14)
    np.testing.assert_array_equal(fr.Z_vectors[0], [0, 0, 0, 1])
    assert np.max(np.abs(fr.omega_matrix)) <= 1e-14
    np.testing.assert_allclose(fr.eta, [-line_patch.u[10, 0]], atol=1e-14)
    np.testing.assert_allclose(fr.deta, [[0.0]])


def test_zero_field_frame(line_patch, plane_patch):
    for p in (line_patch, plane_patch):
        Y = zero_field(p)
        fr = build_frame(p, Y, 3)
        assert np.all(fr.W_vectors[:, p.m:] == 0)
        assert np.all(fr.omega_matrix == 0)
        assert np.all(fr.eta == 0) and np.all(fr.deta == 0)
        assert lagrangian_residual(p, Y) == 0


def test_rotation_values(plane_patch):
    Y = rotation(plane_patch)
    G = omega_gram(plane_patch, Y)
    np.testing.assert_allclose(G[:, 0, 1], -2.0, atol=1e-14)
    assert lagrangian_residual(plane_patch, Y) == pytest.approx(2.0, abs=1e-9)
    _, deta = eta_and_deta(plane_patch, Y, 40)
    # omega(W_1, W_2) = deta_12 with the exterior derivative convention used here
    assert deta[0, 1] == pytest.approx(-2.0, abs=1e-12) and deta[1, 0] == pytest.approx(2.0, abs=1e-12)
    assert cross_identity_residual(plane_patch, Y) <= 1e-12


def test_rotation_is_degenerate(plane_patch):
    with pytest.raises(DegenerateImmersionError):
        phase_matrices(plane_patch, rotation(plane_patch))


@pytest.mark.parametrize("name", ["line_patch", "lse_line_patch", "plane_patch", "lse_plane_patch", "slab_patch"])
def test_structural_zeros_and_identities(name, request):
    patch = request.getfixturevalue(name)
    rng = np.random.default_rng(7)
    fields = [random_explicit(patch, rng) for _ in range(3)] + [zero_field(patch)]
    fields.append(gradient_field(patch, u_expr(" + ".join(f"u{i + 1}^3/5" for i in range(patch.k)), patch.k)))
    for Y in fields:
        z = structural_residual(patch, Y)
        assert z.wz <= 1e-10 and z.zz <= 1e-10 and z.antisymmetry <= 1e-12
        assert cross_identity_residual(patch, Y) <= 1e-8
        assert eta_identity_residual(patch, Y) <= 1e-9


@pytest.mark.parametrize("name", ["lse_plane_patch", "slab_patch"])
def test_gradient_versus_non_gradient(name, request):
    patch = request.getfixturevalue(name)
    Yg = gradient_field(patch, u_expr("u1^2*u2/3 + exp(u1/2) - u2^3/4", 2))
    assert lagrangian_residual(patch, Yg) <= 1e-9
    Yn = random_explicit(patch, np.random.default_rng(3))
    delta = float(np.max(np.abs(deta_field(patch, Yn))))
    assert delta > 1e-3
    assert lagrangian_residual(patch, Yn) >= delta * (1 - 1e-6)


def test_grid_field_deta_needs_interior(plane_patch):
    Y = field_from_values(plane_patch, rotation(plane_patch).Y)
    with pytest.raises(BoundaryNodeError):
        eta_and_deta(plane_patch, Y, 0)
    centre = plane_patch.flat_index((8, 8))
    _, deta = eta_and_deta(plane_patch, Y, centre)
    assert deta[0, 1] == pytest.approx(-2.0, abs=1e-10)


def test_eta_formula(lse_line_patch):
    Y = gradient_field(lse_line_patch, u_expr("u1^3/6 + u1/3", 1))
    np.testing.assert_allclose(eta_field(lse_line_patch, Y)[:, 0], -(lse_line_patch.u[:, 0] ** 2 / 2 + 1 / 3), atol=1e-13)


@pytest.mark.parametrize("c", [0.5, 1.0, -2.0])
def test_line_phase(line_patch, c):
    Y = gradient_field(line_patch, u_expr(f"{c}*u1^2/2", 1))
    pm = phase_matrices(line_patch, Y)
    np.testing.assert_allclose(pm.detWZ, 1 + 1j * c, atol=1e-14)
    assert slag_residual(line_patch, Y, np.arctan(c)) <= 1e-14


def test_zero_field_phase_is_real(lse_line_patch, slab_patch):
    for p in (lse_line_patch, slab_patch):
        ph = phase_matrices(p, zero_field(p)).phase
        assert np.all(np.minimum(np.abs(ph), np.abs(np.abs(ph) - np.pi)) <= 1e-14)


def test_harmonic_quadratic_phase(plane_patch):
    Y = gradient_field(plane_patch, u_expr("u1^2/2 - u2^2/2", 2))
    pm = phase_matrices(plane_patch, Y)
    np.testing.assert_allclose(pm.detWZ, 2.0, atol=1e-14)
    assert slag_residual(plane_patch, Y, 0.0) <= 1e-14


def test_phase_matrix_parts(lse_plane_patch):
    Y = gradient_field(lse_plane_patch, u_expr("u1*u2 + u1^2/3", 2))
    pm = phase_matrices(lse_plane_patch, Y)
    np.testing.assert_array_equal(pm.Wmat.real, lse_plane_patch.dx_du)
    np.testing.assert_array_equal(pm.Wmat.imag, Y.dY_du)
    assert np.max(np.abs(np.diff(slag_phase(pm).reshape(lse_plane_patch.shape), axis=0))) < np.pi / 2


@pytest.mark.parametrize("name", ["line_patch", "lse_line_patch", "plane_patch", "lse_plane_patch", "slab_patch"])
def test_omega_pullback(name, request):
    patch = request.getfixturevalue(name)
    Y = gradient_field(patch, u_expr(" + ".join(f"u{i + 1}^2/3" for i in range(patch.k)), patch.k))
    assert omega_pullback_residual(patch, Y) <= 1e-10
    pm = phase_matrices(patch, Y)
    ratio = omega_pullback(patch, Y) / pm.detWZ
    np.testing.assert_allclose(ratio, 1j ** (patch.m - patch.k), atol=1e-12)


@pytest.mark.parametrize("name", ["lse_line_patch", "slab_patch"])
def test_kahler_compatibility(name, request):
    assert kahler_compatibility_residual(request.getfixturevalue(name)) <= 1e-12


def test_normal_lift_equals_zero_lift(lse_line_patch):
    t = np.random.default_rng(1).random((6, 1))
    Yn = normal_field(lse_line_patch, [u_expr("0.3 + u1^2", 1)])
    assert lift_distance(lse_line_patch, Yn, zero_field(lse_line_patch), t) <= 1e-10
    Yt = gradient_field(lse_line_patch, u_expr("u1^2/2", 1))
    assert lift_distance(lse_line_patch, Yt, zero_field(lse_line_patch), t) > 1e-3
