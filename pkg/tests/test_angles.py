import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from semiflat.angles import circular_distance, continuation_parent, max_neighbour_jump, unwrap_grid, wrap


def test_wrap_range():
    assert wrap(np.pi) == np.pi
    assert wrap(-np.pi) == np.pi
    assert wrap(3 * np.pi / 2) == -np.pi / 2


@given(st.floats(-100, 100))
def test_wrap_is_principal(x):
    w = wrap(x)
    assert -np.pi < w <= np.pi
    assert abs(np.exp(1j * w) - np.exp(1j * x)) < 1e-9


def test_circular_distance():
    assert abs(circular_distance(0.1, 2 * np.pi - 0.1) - 0.2) < 1e-12


def test_continuation_parent():
    assert continuation_parent((0, 0)) is None
    assert continuation_parent((2, 0)) == (1, 0)
    assert continuation_parent((2, 3)) == (2, 2)


def test_unwrap_grid_removes_branch_cut():
    u1, u2 = np.meshgrid(np.linspace(0, 1, 9), np.linspace(0, 1, 9), indexing="ij")
    smooth = 2.8 + 1.0 * u1 + 0.7 * u2
    out = unwrap_grid(wrap(smooth))
    np.testing.assert_allclose(out, smooth, atol=1e-12)
    assert max_neighbour_jump(out) < np.pi / 2
    assert max_neighbour_jump(wrap(smooth)) > np.pi
