import math

import numpy as np
import pytest

from conftest import config_path, subspace, u_expr
from semiflat.atlas import OutsideDomainError
from semiflat.config import load_config
from semiflat.lagrangian import deta_field, phase_matrices
from semiflat.locus import explicit_field, gradient_field, normal_field, zero_field
from semiflat.mirror import (
    b_matrix,
    connection_transport_check,
    cr_residual,
    curvature,
    dhym_residual,
    f02_residual,
    frame_constant,
    mirror_coords,
    mirror_cross_residual,
    mirror_frame,
    omega_tilde,
    top_power_bruteforce,
    triviality_check,
    v_independence_residual,
)

ALL = ["line_patch", "lse_line_patch", "plane_patch", "lse_plane_patch", "slab_patch"]


def test_line_coordinates(line_patch):
    mc = mirror_coords(line_patch, 5, [0.25])
    np.testing.assert_allclose(mc.xtilde, [line_patch.u[5, 0], 0.5])
    np.testing.assert_allclose(mc.ytilde, [0.25, 0])
    assert np.all(mirror_coords(line_patch, 5).ytilde == 0)
    with pytest.raises(IndexError):
        mirror_coords(line_patch, 65)


def test_full_dimensional_coordinates(lse_plane_patch):
    mc = mirror_coords(lse_plane_patch, 7, [0.1, 0.2])
    np.testing.assert_allclose(mc.xtilde, lse_plane_patch.u[7] + lse_plane_patch.S.a)
    np.testing.assert_allclose(mc.ytilde, [0.1, 0.2])


@pytest.mark.parametrize("name", ALL)
def test_cauchy_riemann_data(name, request):
    assert cr_residual(request.getfixturevalue(name)) <= 1e-8


def test_curvature_examples(line_patch, plane_patch, lse_plane_patch):
    F, F02 = curvature(line_patch, gradient_field(line_patch, u_expr("u1^3", 1)))
    assert F02.shape == (65, 1, 1) and np.all(F02 == 0)
    rot = explicit_field(plane_patch, [u_expr("-u2", 2), u_expr("u1", 2)])
    _, F02 = curvature(plane_patch, rot)
    np.testing.assert_allclose(np.abs(F02[:, 0, 1]), 1.0, atol=1e-15)
    assert f02_residual(plane_patch, rot) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        c = rng.uniform(-1, 1, 4)
        f = u_expr(f"{float(c[0])!r}*u1^3 + {float(c[1])!r}*u1*u2^2 + {float(c[2])!r}*exp(u2) + {float(c[3])!r}*u1*u2", 2)
        assert f02_residual(lse_plane_patch, gradient_field(lse_plane_patch, f)) <= 1e-9


@pytest.mark.parametrize("name", ALL)
def test_mirror_cross_identity(name, request):
    patch = request.getfixturevalue(name)
    rng = np.random.default_rng(2)
    comps = [u_expr(" + ".join(f"{float(rng.uniform(-1, 1))!r}*u{i + 1}^2" for i in range(patch.k)), patch.k)
             for _ in range(patch.m)]
    Y = explicit_field(patch, comps)
    assert mirror_cross_residual(patch, Y, deta_field(patch, Y)) <= 1e-8


def test_triviality(lse_line_patch):
    p = lse_line_patch
    assert triviality_check(p, normal_field(p, [u_expr("1 + u1", 1)])).trivial
    tangent = gradient_field(p, u_expr("u1", 1))
    rep = triviality_check(p, tangent)
    assert not rep.trivial and rep.agree
    z = triviality_check(p, zero_field(p))
    assert z.trivial and z.connection_residual == 0


@pytest.mark.parametrize("name", ALL)
def test_omega_tilde(name, request):
    ot = omega_tilde(request.getfixturevalue(name))
    assert ot.consistency <= 1e-12
    assert ot.min_eigenvalue > 0


def test_transport_checks():
    cfg = load_config(config_path("three_chart_shear.cfg"))
    atlas = cfg.atlas
    rng = np.random.default_rng(4)
    for t in atlas.transitions:
        pts = t.overlap.grid(3)
        Ys = rng.standard_normal((len(pts), 2))
        rep = connection_transport_check(atlas, t, pts, Ys)
        assert rep.form_residual <= 1e-10 and rep.vector_residual <= 1e-12
        bad = connection_transport_check(atlas, t, pts, Ys, Y_target=Ys)
        assert bad.vector_residual == pytest.approx(np.max(np.abs(Ys @ (np.linalg.inv(t.A).T - np.eye(2)))), rel=1e-12)
        assert bad.form_residual > 1e-3
    ident = load_config(config_path("two_chart_shifted.cfg")).atlas
    t = ident.transitions[0]
    rep = connection_transport_check(ident, t, t.overlap.grid(2), np.ones((4, 2)))
    assert rep.form_residual == 0 and rep.vector_residual == 0
    with pytest.raises(OutsideDomainError):
        connection_transport_check(ident, t, [[1.5, 0]], [[1, 1]])


def test_frame_constant():
    assert frame_constant(subspace([1, 0], [0, 1], [0, 0])) == 1
    S = subspace([[1, 0], [1, 1], [0, 1]], [0, 0, 1], [0, 0, 0])
    Zd = np.linalg.inv(S.frame.astype(float))[2:].T
    oracle = np.linalg.det(np.hstack([S.Xi, Zd])) / np.linalg.det(Zd.T @ Zd)
    assert float(frame_constant(S)) == pytest.approx(oracle, rel=1e-12)
    # frame [[2, 1], [1, 1]]: dual normal (-1, 2), so det[[2, -1], [1, 2]] / 5 = 1
    assert frame_constant(subspace([2, 1], [1, 1], [0, 0])) == 1
    S = subspace([[1, 0], [0, 1], [1, 1]], [1, 0, 2], [0, 0, 0])
    Zd = np.linalg.inv(S.frame.astype(float))[2:].T
    oracle = np.linalg.det(np.hstack([S.Xi, Zd])) / np.linalg.det(Zd.T @ Zd)
    assert float(frame_constant(S)) == pytest.approx(oracle, rel=1e-12)


def test_dhym_line_examples(line_patch):
    Y = gradient_field(line_patch, u_expr("u1^2/2", 1))
    r = dhym_residual(line_patch, Y, math.pi / 4)
    assert r.residual <= 1e-14 and r.factorization_gap <= 1e-14 and r.oracle_residual <= 1e-14
    z = dhym_residual(line_patch, zero_field(line_patch), 0.0)
    assert z.residual == 0
    rng = np.random.default_rng(5)
    for _ in range(5):
        c = rng.uniform(-1, 1, 4)
        Yr = explicit_field(line_patch, [u_expr(f"{float(c[0])!r}*u1^2 + {float(c[1])!r}", 1), u_expr(f"{float(c[2])!r}*u1^3 + {float(c[3])!r}*u1", 1)])
        pm = phase_matrices(line_patch, Yr)
        np.testing.assert_allclose(np.linalg.det(b_matrix(line_patch, Yr, pm)), pm.detWZ, atol=1e-15)


@pytest.mark.parametrize("name", ["lse_line_patch", "lse_plane_patch", "slab_patch"])
def test_factorization_and_top_power(name, request):
    patch = request.getfixturevalue(name)
    Y = gradient_field(patch, u_expr(" + ".join(f"u{i + 1}^3/7 + u{i + 1}/2" for i in range(patch.k)), patch.k))
    r = dhym_residual(patch, Y, 0.3)
    assert r.factorization_gap <= 1e-9
    assert r.mod_pi_gap <= 1e-9
    assert r.top_power_gap <= 1e-12


def test_top_power_k1_k2():
    B1 = np.array([[1 + 2j]])
    assert top_power_bruteforce(B1) == pytest.approx(1 + 2j)
    B2 = np.array([[1 + 1j, 0.3j], [-0.3j, 2 - 1j]])
    assert top_power_bruteforce(B2) == pytest.approx(2 * np.linalg.det(B2))


def test_mirror_frame_and_v_independence(lse_plane_patch):
    Y = gradient_field(lse_plane_patch, u_expr("u1^2 + u2^3/3", 2))
    fr = mirror_frame(lse_plane_patch, Y, 10, [0.3, 0.1])
    np.testing.assert_allclose(fr.omega_tilde, fr.omega_tilde.conj().T)
    assert np.all(np.linalg.eigvalsh(fr.omega_tilde) > 0)
    assert np.max(np.abs(fr.F02)) <= 1e-9
    assert v_independence_residual(lse_plane_patch, Y) <= 1e-12
