import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import streamfit as sf
from streamfit import fixedpoint as fp
from streamfit.trees import (
    DomainError,
    TreeMetricRep,
    UltrametricTree,
    four_point_check,
    from_ultrametric_matrix,
    is_ultrametric,
    quantize_levels,
    single_linkage_tree,
)

U = fp.SCALE


def two_pair_gadget():
    """Two tight pairs at 0.5 joined at 1.5."""
    lo, hi = fp.from_decimal("0.5"), fp.from_decimal("1.5")
    D = np.full((4, 4), hi, dtype=np.int64)
    np.fill_diagonal(D, 0)
    D[0, 1] = D[1, 0] = lo
    D[2, 3] = D[3, 2] = lo
    return D


class TestUltrametricTree:
    def test_from_nested_distances(self):
        tree = UltrametricTree.from_nested(4, (2 * U, [(1 * U, [0, 1]), (1 * U, [2, 3])]))
        assert tree.distance(0, 1) == 1 * U
        assert tree.distance(0, 2) == 2 * U
        assert tree.distance(2, 3) == 1 * U
        assert tree.distance(1, 1) == 0

    def test_induced_matrix_matches_pairwise_distance(self):
        tree = UltrametricTree.from_nested(
            5, (3 * U, [(1 * U, [0, 4]), (2 * U, [1, (1 * U, [2, 3])])])
        )
        M = tree.induced_matrix()
        for i in range(5):
            for j in range(5):
                assert M[i, j] == tree.distance(i, j)

    def test_equal_level_children_are_merged(self):
        nested = (2 * U, [(2 * U, [0, 1]), 2])
        tree = UltrametricTree.from_nested(3, nested)
        flat = UltrametricTree.from_nested(3, (2 * U, [0, 1, 2]))
        assert tree == flat

    def test_unary_nodes_collapse(self):
        tree = UltrametricTree.from_nested(2, (3 * U, [(1 * U, [0, 1])]))
        assert tree == UltrametricTree.from_nested(2, (1 * U, [0, 1]))

    def test_levels_must_decrease(self):
        with pytest.raises(DomainError):
            UltrametricTree.from_nested(3, (1 * U, [(2 * U, [0, 1]), 2]))

    def test_leaf_set_must_be_exact(self):
        with pytest.raises(DomainError):
            UltrametricTree.from_nested(3, (1 * U, [0, 1]))
        with pytest.raises(DomainError):
            UltrametricTree.from_nested(2, (1 * U, [0, 0]))

    def test_single_leaf(self):
        tree = UltrametricTree.single_leaf()
        assert tree.n == 1
        assert tree.induced_matrix().shape == (1, 1)

    def test_shift_levels(self):
        tree = UltrametricTree.from_nested(3, (2 * U, [(1 * U, [0, 1]), 2]))
        shifted = tree.shift_levels(U // 2)
        assert shifted.distance(0, 1) == 3 * U // 2
        assert shifted.distance(0, 2) == 5 * U // 2

    def test_json_roundtrip(self):
        tree = UltrametricTree.from_nested(4, (2 * U, [(1 * U, [0, 3]), 1, 2]))
        again = UltrametricTree.from_json(tree.to_json())
        assert again == tree

    def test_json_is_deterministic(self):
        tree = UltrametricTree.from_nested(3, (2 * U, [(1 * U, [0, 1]), 2]))
        assert tree.to_json() == UltrametricTree.from_json(tree.to_json()).to_json()

    def test_newick_halves_branch_lengths(self):
        tree = UltrametricTree.from_nested(2, (1 * U, [0, 1]))
        text = tree.to_newick()
        assert text.endswith(";")
        assert "0.5" in text


class TestPredicates:
    def test_two_pair_gadget_is_ultrametric(self):
        assert is_ultrametric(two_pair_gadget())

    def test_violated_triangle(self):
        D = np.array(
            [[0, 2, 1], [2, 0, 1], [1, 1, 0]], dtype=np.int64
        ) * U
        # max side (0,1)=2 exceeds the other two: not an ultrametric
        assert not is_ultrametric(D)

    def test_four_point_holds_on_tree_metric(self):
        # path metric on a star
        D = np.array(
            [
                [0, 2, 3, 3],
                [2, 0, 3, 3],
                [3, 3, 0, 2],
                [3, 3, 2, 0],
            ],
            dtype=np.int64,
        ) * U
        assert four_point_check(D)

    def test_four_point_counterexample(self):
        # pairing sums 10, 4, 4: the largest is attained once
        D = np.array(
            [
                [0, 5, 2, 2],
                [5, 0, 2, 2],
                [2, 2, 0, 5],
                [2, 2, 5, 0],
            ],
            dtype=np.int64,
        ) * U
        s12_34 = D[0, 1] + D[2, 3]
        s13_24 = D[0, 2] + D[1, 3]
        s14_23 = D[0, 3] + D[1, 2]
        assert (s12_34, s13_24, s14_23) == (10 * U, 4 * U, 4 * U)
        assert not four_point_check(D)

    def test_every_ultrametric_passes_four_point(self):
        assert four_point_check(two_pair_gadget())


class TestBuilders:
    def test_from_ultrametric_matrix_roundtrip(self):
        D = two_pair_gadget()
        tree = from_ultrametric_matrix(D)
        assert np.array_equal(tree.induced_matrix(), D)

    def test_single_linkage_needs_connectivity(self):
        with pytest.raises(DomainError):
            single_linkage_tree(3, [(1, 0, 1)])

    def test_single_linkage_from_forest(self):
        tree = single_linkage_tree(3, [(1 * U, 0, 1), (2 * U, 1, 2)])
        assert tree.distance(0, 1) == 1 * U
        assert tree.distance(0, 2) == 2 * U

    def test_quantize_snaps_up_and_clamps(self):
        tree = UltrametricTree.from_nested(3, (5 * U, [(1 * U, [0, 1]), 2]))
        snapped = quantize_levels(tree, [2 * U, 4 * U])
        assert snapped.distance(0, 1) == 2 * U
        assert snapped.distance(0, 2) == 4 * U


@st.composite
def random_ultrametric(draw):
    n = draw(st.integers(min_value=2, max_value=7))
    weights = draw(
        st.lists(st.integers(min_value=1, max_value=5), min_size=n - 1, max_size=n - 1)
    )
    edges = [(w * U, i, i + 1) for i, w in enumerate(weights)]
    return single_linkage_tree(n, edges).induced_matrix()


@given(random_ultrametric())
@settings(max_examples=60, deadline=None)
def test_minimax_relaxation_fixpoint(D):
    """An ultrametric equals its own one-step minimax relaxation."""
    assert is_ultrametric(D)
    assert four_point_check(D)


class TestTreeMetricRep:
    def make(self):
        base = from_ultrametric_matrix(two_pair_gadget())
        row = np.array([0, 1, 2, 2], dtype=np.int64) * (U // 4)
        return TreeMetricRep(base, 0, row)

    def test_centroid_symmetry_and_pivot(self):
        rep = self.make()
        m = rep.m_a
        assert rep.centroid_value(1, 2) == rep.centroid_value(2, 1)
        assert rep.centroid_value(0, 3) == 2 * m - rep.pivot_row[3]

    def test_distance_is_base_minus_centroid(self):
        rep = self.make()
        M = rep.induced_matrix()
        for i in range(4):
            for j in range(4):
                assert M[i, j] == rep.distance(i, j)
        assert np.array_equal(M, M.T)
        assert (np.diag(M) == 0).all()

    def test_pivot_row_must_have_zero_at_pivot(self):
        base = from_ultrametric_matrix(two_pair_gadget())
        with pytest.raises(DomainError):
            TreeMetricRep(base, 0, np.array([1, 1, 2, 2], dtype=np.int64))

    def test_json_roundtrip(self):
        rep = self.make()
        again = TreeMetricRep.from_json(rep.to_json())
        assert np.array_equal(again.induced_matrix(), rep.induced_matrix())
        assert again.pivot == rep.pivot
