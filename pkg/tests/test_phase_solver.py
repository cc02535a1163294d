import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import u_expr
from semiflat.angles import wrap
from semiflat.lagrangian import slag_residual
from semiflat.locus import gradient_field
from semiflat.mirror import dhym_residual
from semiflat.phase_solver import (
    PhaseProblem,
    ZeroResultantError,
    estimate_theta,
    initial_guess,
    phase_residual,
    solve_phase,
)


def test_estimate_theta_examples():
    assert estimate_theta(np.full(10, math.pi / 4)) == pytest.approx(math.pi / 4, abs=1e-15)
    assert estimate_theta([0.0, math.pi / 2]) == pytest.approx(math.pi / 4, abs=1e-15)
    with pytest.raises(ZeroResultantError):
        estimate_theta([0.0, math.pi])
    with pytest.raises(ZeroResultantError):
        estimate_theta([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-math.pi, math.pi), min_size=1, max_size=30))
def test_estimate_theta_phasor_oracle(phases):
    re = sum(math.cos(p) for p in phases)
    im = sum(math.sin(p) for p in phases)
    if math.hypot(re, im) <= 1e-6 * len(phases):
        return
    assert abs(wrap(estimate_theta(phases) - math.atan2(im, re))) <= 1e-12


def test_initial_guess_interpolates(line_patch, plane_patch):
    b = 0.5 * line_patch.u[:, 0] ** 2
    g = initial_guess(PhaseProblem(line_patch, math.pi / 4, b))
    np.testing.assert_allclose(g[[0, -1]], b[[0, -1]])
    np.testing.assert_allclose(np.diff(g, 2), 0, atol=1e-15)
    u = plane_patch.u
    lin = 0.3 * u[:, 0] - 0.7 * u[:, 1] + 1
    np.testing.assert_allclose(initial_guess(PhaseProblem(plane_patch, 0.0, lin)), lin, atol=1e-14)


def test_k1_quadratic_recovered(line_patch):
    exact = 0.5 * line_patch.u[:, 0] ** 2
    assert exact[0] == pytest.approx(0.005) and exact[-1] == pytest.approx(0.405)
    t0 = time.perf_counter()
    sol = solve_phase(PhaseProblem(line_patch, math.pi / 4, exact))
    assert time.perf_counter() - t0 < 5
    assert sol.converged and sol.iterations <= 10
    assert np.max(np.abs(sol.f - exact)) <= 1e-6
    assert sol.residual <= 1e-8


def test_quadratic_convergence(line_patch):
    sol = solve_phase(PhaseProblem(line_patch, math.pi / 4, 0.5 * line_patch.u[:, 0] ** 2))
    # drop the final iterate, which sits at the round-off floor
    e = np.asarray(sol.history)[:-1]
    ratios = e[1:] / e[:-1] ** 2
    assert len(ratios) >= 3
    assert np.all(ratios[-3:] < 10.0)


def test_flat_solution(line_patch, plane_patch):
    for patch in (line_patch, plane_patch):
        sol = solve_phase(PhaseProblem(patch, 0.0, np.zeros(patch.n_nodes)))
        assert sol.converged and sol.iterations == 0
        assert np.all(sol.f == 0)


def test_k2_balanced_solution(plane_patch):
    u = plane_patch.u
    exact = 0.5 * u[:, 0] ** 2 - 0.5 * u[:, 1] ** 2
    sol = solve_phase(PhaseProblem(plane_patch, 0.0, exact))
    assert sol.converged
    assert np.max(np.abs(sol.f - exact)) <= 1e-6
    rng = np.random.default_rng(0)
    start = exact + 0.05 * rng.standard_normal(exact.size)
    sol2 = solve_phase(PhaseProblem(plane_patch, 0.0, exact), f0=start)
    assert sol2.converged and np.max(np.abs(sol2.f - exact)) <= 1e-6


def test_residual_matches_lagrangian_assembly(lse_line_patch):
    p = lse_line_patch
    f = u_expr("0.7*u1^2 + 0.3*u1 - 1", 1)
    theta = 0.7
    r, _ = phase_residual(p, f(p.u), theta)
    Y = gradient_field(p, f)
    # grid jets of a quadratic are exact, so both paths see the same Y
    assert abs(np.max(np.abs(r)) - slag_residual(p, Y, theta)) <= 1e-12


def test_solution_is_consistent_with_other_rows(lse_line_patch):
    p = lse_line_patch
    theta = 0.6
    b = 0.5 * p.u[:, 0] ** 2
    sol = solve_phase(PhaseProblem(p, theta, b))
    assert sol.converged
    mask = p.interior_mask()
    assert abs(sol.residual - slag_residual(p, sol.Y, theta, mask)) <= 1e-12
    assert dhym_residual(p, sol.Y, theta, mask=mask).residual <= 1e-7


def test_problem_validation(line_patch):
    with pytest.raises(ValueError):
        PhaseProblem(line_patch, 0.0, np.zeros(3))
    b = np.zeros(line_patch.n_nodes)
    b[0] = np.nan
    with pytest.raises(ValueError):
        PhaseProblem(line_patch, 0.0, b)
