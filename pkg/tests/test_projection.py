"""Projection sampling, complete rows and collapsed labels."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from pklm.data import MissingnessMask, extract_patterns
from pklm.errors import DegenerateLabelingError, DimensionTooSmallError
from pklm.projection import (
    NO_CLASS,
    ProjectionPair,
    collapse_labels,
    complete_rows,
    relabel_under_permutation,
    sample_projection_pair,
)

# x = (NA, 1, NA, 2, 4), y = (NA, NA, NA, 1, 3) as mask rows
XY = MissingnessMask(np.array([[1, 0, 1, 0, 0], [1, 1, 1, 0, 0]]))

# four rows with four patterns; rows 0-2 complete on columns 3..5 (1-based),
# rows 1 and 2 both missing column 2
FOUR = MissingnessMask(np.array([
    [0, 0, 0, 0, 0],
    [0, 1, 0, 0, 0],
    [1, 1, 0, 0, 0],
    [0, 0, 1, 0, 0],
]))


class TestSampler:
    def test_p2_gives_two_singletons(self, rng):
        for _ in range(50):
            pair = sample_projection_pair(rng, 2)
            assert sorted(pair.a_dims + pair.b_dims) == [0, 1]

    def test_p_too_small(self, rng):
        with pytest.raises(DimensionTooSmallError):
            sample_projection_pair(rng, 1)

    def test_four_pattern_pair_attainable(self, rng):
        target = ((2, 3, 4), (1,))
        seen = {(pr.a_dims, pr.b_dims) for pr in (sample_projection_pair(rng, 5) for _ in range(20000))}
        assert target in seen

    def test_structural_invariants(self, rng):
        for p in (2, 3, 7, 25):
            for _ in range(2500):
                pair = sample_projection_pair(rng, p)
                a, b = set(pair.a_dims), set(pair.b_dims)
                assert a and b and not a & b
                assert len(a) + len(b) <= p
                assert max(a | b) < p

    def test_a_membership_symmetric(self, rng):
        counts = np.zeros(3)
        for _ in range(6000):
            counts[list(sample_projection_pair(rng, 3).a_dims)] += 1
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_size_law(self, rng):
        # |A| uniform on 1..p-1
        p = 6
        sizes = np.bincount([len(sample_projection_pair(rng, p).a_dims) for _ in range(5000)], minlength=p)
        assert stats.chisquare(sizes[1:]).pvalue > 1e-3

    def test_pair_validation(self):
        with pytest.raises(ValueError):
            ProjectionPair((0, 1), (1,))
        with pytest.raises(ValueError):
            ProjectionPair((), (1,))


class TestCompleteRows:
    def test_both_rows_on_last_two(self):
        assert complete_rows(XY, [3, 4]).tolist() == [0, 1]

    def test_only_x_on_second(self):
        assert complete_rows(XY, [1]).tolist() == [0]

    def test_all_zero(self):
        assert complete_rows(np.zeros((5, 3), dtype=np.uint8), [0, 2]).tolist() == [0, 1, 2, 3, 4]


class TestCollapse:
    def test_shared_label_is_degenerate(self):
        with pytest.raises(DegenerateLabelingError):
            collapse_labels(XY, [0, 1], [0, 2], 2)

    def test_two_singletons(self):
        lab = collapse_labels(XY, [0, 1], [0, 1], 2)
        assert lab.n_classes == 2
        assert lab.class_counts.tolist() == [1, 1]
        assert lab.labels.tolist() == [0, 1]

    def test_four_row_example(self):
        rows = complete_rows(FOUR, [2, 3, 4])
        assert rows.tolist() == [0, 1, 2]
        lab = collapse_labels(FOUR, rows, [1], 2)
        assert lab.n_classes == 2
        assert sorted(lab.class_counts.tolist()) == [1, 2]
        assert lab.labels[1] == lab.labels[2] != lab.labels[0]

    def test_empty_rows(self):
        with pytest.raises(DegenerateLabelingError):
            collapse_labels(XY, [], [0], 2)

    def test_frequency_ranking_and_merge(self):
        # patterns on B: a a b b b c d  -> b (3), a (2), c, d (first occurrence breaks tie)
        bits = np.array([[0, 0], [0, 0], [1, 0], [1, 0], [1, 0], [0, 1], [1, 1]], dtype=np.uint8)
        bits = np.hstack([np.zeros((7, 1), dtype=np.uint8), bits])
        full = collapse_labels(bits, np.arange(7), [1, 2], 10)
        assert full.labels.tolist() == [1, 1, 0, 0, 0, 2, 3]
        merged = collapse_labels(bits, np.arange(7), [1, 2], 3)
        assert merged.labels.tolist() == [1, 1, 0, 0, 0, 2, 2]
        assert merged.class_counts.tolist() == [3, 2, 2]
        assert merged.pattern_to_class == {(1, 0): 0, (0, 0): 1, (0, 1): 2, (1, 1): 2}

    def test_wide_b_uses_byte_keys(self, rng):
        bits = (rng.random((40, 70)) < 0.2).astype(np.uint8)
        bits[:, 0] = 0
        b = list(range(1, 70))
        lab = collapse_labels(bits, np.arange(40), b, 5)
        again = relabel_under_permutation(bits, lab, b)
        np.testing.assert_array_equal(again, lab.labels)


def _masks(min_rows=2):
    return arrays(np.uint8, st.tuples(st.integers(min_rows, 25), st.integers(2, 6)), elements=st.integers(0, 1))


@given(_masks(), st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_labeling_properties(bits, seed, k):
    bits[bits.all(axis=1), 0] = 0
    rng = np.random.default_rng(seed)
    pair = sample_projection_pair(rng, bits.shape[1])
    rows = complete_rows(bits, pair.a_dims)
    assert not bits[np.ix_(rows, pair.a_dims)].any()
    try:
        lab = collapse_labels(bits, rows, pair.b_dims, k)
    except DegenerateLabelingError:
        return
    assert lab.class_counts.sum() == rows.size
    assert 2 <= lab.n_classes <= k
    assert set(np.unique(lab.labels)) == set(range(lab.n_classes))
    # same full pattern => same collapsed label
    cat = extract_patterns(MissingnessMask(bits[rows]))
    for g in range(cat.n_patterns):
        assert np.unique(lab.labels[cat.row_to_pattern == g]).size == 1
    assert lab.n_classes <= cat.n_patterns
    # identity permutation reproduces the labels
    np.testing.assert_array_equal(relabel_under_permutation(bits, lab, pair.b_dims), lab.labels)


class TestRelabel:
    def test_swap_identical_patterns(self):
        bits = np.array([[0, 1], [0, 1], [0, 0]], dtype=np.uint8)
        lab = collapse_labels(bits, [0, 1, 2], [1], 2)
        swapped = MissingnessMask(bits).permute_rows([1, 0, 2])
        np.testing.assert_array_equal(relabel_under_permutation(swapped, lab, [1]), lab.labels)

    def test_unseen_pattern_gets_no_class(self):
        # A = {col 0} keeps rows 0 and 1 with B patterns (0, 0) and (1, 0) on
        # cols 1-2. Row 2 misses col 0, so its B pattern (0, 1) is never seen.
        bits = np.array([[0, 0, 0], [0, 1, 0], [1, 0, 1]], dtype=np.uint8)
        rows = complete_rows(bits, [0])
        assert rows.tolist() == [0, 1]
        lab = collapse_labels(bits, rows, [1, 2], 2)
        assert lab.pattern_to_class == {(0, 0): 0, (1, 0): 1}
        # permuted row 0 now carries original row 2
        out = relabel_under_permutation(MissingnessMask(bits).permute_rows([2, 1, 0]), lab, [1, 2])
        assert out.tolist() == [NO_CLASS, 1]
