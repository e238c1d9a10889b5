from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rbwalk.errors import InvalidType
from rbwalk.roots import build_root_system, enumerate_weyl_group, parse_type, reflection_matrix, weyl_group_order

SMALL = ["A1", "A2", "A3", "B2", "B3", "C3", "D4", "G2", "F4"]


@pytest.mark.parametrize("name,n_pos", [("A1", 1), ("A2", 3), ("A3", 6), ("B2", 4), ("B3", 9),
                                        ("C3", 9), ("D4", 12), ("G2", 6), ("F4", 24), ("E6", 36),
                                        ("E7", 63), ("E8", 120)])
def test_number_of_positive_roots(name, n_pos):
    assert build_root_system(name).n_positive == n_pos


@pytest.mark.parametrize("name,order", [("A1", 2), ("A2", 6), ("B2", 8), ("G2", 12), ("F4", 1152),
                                        ("D4", 192), ("E8", 696729600)])
def test_weyl_group_order(name, order):
    assert weyl_group_order(*parse_type(name)) == order


@pytest.mark.parametrize("name", ["A1", "A2", "B2", "G2", "B3", "F4"])
def test_enumeration_matches_order(name):
    spec = build_root_system(name)
    assert enumerate_weyl_group(spec).order == weyl_group_order(spec.family, spec.rank)


@pytest.mark.parametrize("name", SMALL)
def test_long_roots_unit_and_highest_root_long(name):
    spec = build_root_system(name)
    norms = np.linalg.norm(spec.roots, axis=1)
    assert np.isclose(norms.max(), 1.0)
    assert np.isclose(np.linalg.norm(spec.highest_root), 1.0)
    # roots come in opposite pairs a, a + n_positive
    n = spec.n_positive
    assert np.allclose(spec.roots[:n], -spec.roots[n:])


@pytest.mark.parametrize("name", SMALL)
def test_root_system_closed_under_simple_reflections(name):
    spec = build_root_system(name)
    keys = {tuple(np.round(r, 9)) for r in spec.roots}
    for a in spec.simple_roots:
        R = reflection_matrix(a)
        for r in spec.roots:
            assert tuple(np.round(R @ r, 9)) in keys


@pytest.mark.parametrize("name", SMALL)
def test_cartan_integrality_and_coroots(name):
    spec = build_root_system(name)
    pair = 2.0 * spec.roots @ spec.roots.T / np.einsum("ij,ij->i", spec.roots, spec.roots)[None, :]
    assert np.allclose(pair, np.rint(pair))
    assert np.allclose(np.einsum("ij,ij->i", spec.roots, spec.coroots), 2.0)


def test_a1_mirrors_at_integers():
    spec = build_root_system("A1")
    assert np.allclose(spec.roots[0], [1.0])
    assert np.allclose(spec.coroots[0], [2.0])


@pytest.mark.parametrize("bad", ["A0", "B1", "C2", "D3", "E5", "E9", "F3", "G3", "Z2", "", "A"])
def test_invalid_types(bad):
    with pytest.raises(InvalidType):
        build_root_system(bad)


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_reflection_is_orthogonal_involution(alpha, x):
    R = reflection_matrix(alpha)
    assert np.allclose(R @ R, np.eye(3), atol=1e-9)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-9)
    assert np.allclose(R @ np.asarray(alpha), -np.asarray(alpha), atol=1e-9)
    assert np.isclose(np.linalg.norm(R @ np.asarray(x)), np.linalg.norm(x), atol=1e-9)
