import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import QUAD2, chart, config_path, subspace
from semiflat.atlas import Atlas, Box, TransitionMap
from semiflat.config import load_config
from semiflat.intlinalg import int_matmul
from semiflat.sections import (
    ConstantSection,
    SectionError,
    act_transition,
    compose,
    dual_basis,
    same_subspace,
    validate_constant_section,
    validate_subspace,
)


def test_validate_subspace_examples():
    r = validate_subspace(subspace([1, 0], [0, 1], [0, 0.5]))
    assert r.valid and r.det == 1
    r = validate_subspace(subspace([1, 0], [2, 0], [0, 0]))
    assert not r.valid and r.det == 0
    r = validate_subspace(subspace([2, 1], [1, 1], [0, 0]))
    assert r.valid and r.det == 1


def test_shape_mismatch():
    with pytest.raises(SectionError):
        subspace([[1, 0], [0, 1], [0, 0]], np.zeros((3, 0)), [0, 0])


def test_dual_basis_examples():
    d = dual_basis(subspace([1, 0], [0, 1], [0, 0]))
    np.testing.assert_array_equal(d.stacked, np.eye(2))
    d = dual_basis(subspace([2, 1], [1, 1], [0, 0]))
    np.testing.assert_array_equal(d.XiDual, [[1, -1]])
    np.testing.assert_array_equal(d.ZetaDual, [[-1, 2]])
    S = subspace([[1, 0], [1, 1], [0, 1]], [0, 0, 1], [0, 0, 0.3])
    d = dual_basis(S)
    np.testing.assert_array_equal(int_matmul(d.stacked, S.frame), np.eye(3, dtype=int))
    np.testing.assert_array_equal(int_matmul(S.frame, d.stacked), np.eye(3, dtype=int))
    with pytest.raises(SectionError):
        dual_basis(subspace([1, 0], [2, 0], [0, 0]))


def test_act_transition_examples():
    S = subspace([1, 0], [0, 1], [0, 0.5])
    same = act_transition(np.eye(2, dtype=int), [0, 0], S)
    assert same_subspace(S, same).equal()
    moved = act_transition(np.eye(2, dtype=int), [1, 0], S)
    np.testing.assert_array_equal(moved.a, [1, 0.5])
    np.testing.assert_array_equal(moved.Xi, S.Xi)
    with pytest.raises(SectionError):
        act_transition([[2, 0], [0, 1]], [0, 0], S)


unimodular = st.tuples(st.integers(-3, 3), st.integers(-3, 3), st.sampled_from([1, -1])).map(
    lambda t: int_matmul(int_matmul([[1, t[0]], [0, 1]], [[1, 0], [t[1], 1]]), [[t[2], 0], [0, 1]])
)
offsets = st.lists(st.floats(-2, 2), min_size=2, max_size=2).map(np.array)


@settings(max_examples=50, deadline=None)
@given(unimodular, offsets, unimodular, offsets, offsets)
def test_group_law(P1, b1, P2, b2, a):
    S = subspace([2, 1], [1, 1], a)
    lhs = act_transition(P1, b1, act_transition(P2, b2, S))
    b, P = compose((b1, P1), (b2, P2))
    rhs = act_transition(P, b, S)
    assert same_subspace(lhs, rhs).equal(1e-9)
    assert validate_subspace(lhs).valid


@settings(max_examples=50, deadline=None)
@given(unimodular, offsets)
def test_dual_of_dual(P, a):
    S = act_transition(P, [0, 0], subspace([1, 0], [0, 1], a))
    d = dual_basis(S)
    # the stacked dual, transposed, is again a unimodular frame whose dual is the original
    back = subspace(d.XiDual.T, d.ZetaDual.T, a)
    dd = dual_basis(back)
    np.testing.assert_array_equal(dd.XiDual.T, S.Xi)
    np.testing.assert_array_equal(dd.ZetaDual.T, S.Zeta)


def test_single_chart_section_is_valid(quad_atlas):
    V = ConstantSection({"U": subspace([1, 0], [0, 1], [0, 0.5])})
    assert validate_constant_section(quad_atlas, V).ok


def _two_chart(offset_n):
    lam = chart(QUAD2 + " + x1", [[-1, 1]] * 2, "L")
    nu = chart(QUAD2, [[-1, 1]] * 2, "N")
    t = TransitionMap("L", "N", np.eye(2, dtype=int), [0, 0], overlap=Box.from_pairs([[-0.5, 0.5]] * 2))
    V = ConstantSection({"L": subspace([1, 0], [0, 1], [0, 0.5]), "N": subspace([1, 0], [0, 1], offset_n)})
    return Atlas.from_parts([lam, nu], [t]), V


def test_two_chart_shifted_section():
    atlas, V = _two_chart([-1, 0.5])
    rep = validate_constant_section(atlas, V)
    assert rep.ok and rep.transitions[0].offset_residual <= 1e-15


def test_offset_mismatch_residual():
    atlas, V = _two_chart([-1, 0.3])
    rep = validate_constant_section(atlas, V)
    assert not rep.ok
    assert rep.transitions[0].offset_residual == pytest.approx(0.2, abs=1e-15)


def test_missing_chart_entry():
    atlas, _ = _two_chart([0, 0])
    with pytest.raises(SectionError):
        validate_constant_section(atlas, ConstantSection({"L": subspace([1, 0], [0, 1], [0, 0.5])}))


def test_three_chart_section_transport():
    # build V on U1, U2 by transporting V on U0; the result is a constant section
    cfg = load_config(config_path("three_chart_shear.cfg"))
    atlas = cfg.atlas
    V0 = subspace([1, 0], [0, 1], [0, 0.5])
    subs = {"U0": V0}
    for cid in ("U1", "U2"):
        t = atlas.transition(cid, "U0")
        subs[cid] = act_transition(t.group_matrix, t.b, V0)
    rep = validate_constant_section(atlas, ConstantSection(subs))
    assert rep.ok
    assert all(c.offset_residual <= 1e-10 for c in rep.transitions)
