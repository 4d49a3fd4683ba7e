"""Probability forests and their out-of-bag estimates."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pklm.errors import EmptyTrainingError, SingleClassError
from pklm.forest import ForestConfig, fit_forest, make_rng, oob_probabilities


def _oracle_tree(X, y, k, cat, w, min_node_size):
    """Plain recursive CART on weighted rows; returns a predict function."""

    def grow(idx):
        cls = np.array([w[idx][y[idx] == c].sum() for c in range(k)], dtype=float)
        tot = cls.sum()
        leaf = ("leaf", cls / tot)
        if tot <= min_node_size or np.count_nonzero(cls) < 2:
            return leaf
        base = (cls**2).sum() / tot
        cands = []
        for f in range(X.shape[1]):
            vals = np.unique(X[idx, f])
            if cat[f]:
                splits = [(v, X[idx, f] == v) for v in vals]
            else:
                splits = [((a + b) / 2, X[idx, f] <= (a + b) / 2) for a, b in zip(vals[:-1], vals[1:])]
            for thr, go in splits:
                li, ri = idx[go], idx[~go]
                if li.size == 0 or ri.size == 0:
                    continue
                lc = np.array([w[li][y[li] == c].sum() for c in range(k)])
                rc = cls - lc
                score = (lc**2).sum() / lc.sum() + (rc**2).sum() / rc.sum()
                cands.append((score, f, thr, li, ri))
        if not cands:
            return leaf
        top = max(c[0] for c in cands)
        if top <= base + 1e-9 * tot:
            return leaf
        score, f, thr, li, ri = min((c for c in cands if c[0] >= top - 1e-9 * tot), key=lambda c: (c[1], c[2]))
        return ("split", f, thr, grow(li), grow(ri))

    root = grow(np.flatnonzero(w > 0))

    def predict(x):
        node = root
        while node[0] == "split":
            _, f, thr, lt, rt = node
            go = x[f] == thr if cat[f] else x[f] <= thr
            node = lt if go else rt
        return node[1]

    return predict


def _oracle_oob(X, y, k, cat, boot, min_node_size):
    n = X.shape[0]
    acc = np.zeros((n, k))
    cov = np.zeros(n, dtype=int)
    for draw in boot:
        w = np.bincount(draw, minlength=n).astype(float)
        predict = _oracle_tree(X, y, k, cat, w, min_node_size)
        for i in np.flatnonzero(w == 0):
            acc[i] += predict(X[i])
            cov[i] += 1
    with np.errstate(invalid="ignore"):
        return acc / cov[:, None], cov


@pytest.mark.parametrize("seed", range(6))
def test_matches_reference_cart(seed):
    rng = np.random.default_rng(seed)
    n, d = 40, 3
    X = rng.standard_normal((n, d))
    X[:, 1] = np.round(X[:, 1] * 2)  # ties in a numeric column
    X[:, 2] = rng.integers(0, 4, n)
    cat = np.array([False, False, seed % 2 == 0])
    k = 2 + seed % 2
    y = rng.integers(0, k, n)
    y[:k] = np.arange(k)
    cfg = ForestConfig(num_trees=8, min_node_size=1 + seed, rng_seed=seed)
    forest = fit_forest(X, y, cfg, categorical=cat, n_classes=k)
    got = oob_probabilities(forest, X)
    boot = make_rng(seed).integers(0, n, size=(8, n))
    ref, cov = _oracle_oob(X, y, k, cat, boot, cfg.min_node_size)
    np.testing.assert_array_equal(got.coverage, cov)
    np.testing.assert_allclose(got.probs, ref, atol=1e-12)


def test_split_between_two_and_three():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0, 0, 1, 1])
    f = fit_forest(X, y, ForestConfig(num_trees=300, min_node_size=1, rng_seed=3))
    both = 0
    for t in range(f.num_trees):
        inbag = y[f.inbag_counts[t] > 0]
        if np.unique(inbag).size == 2:
            both += 1
            assert f.feature[t, 0] == 0
            # the root cut separates the in-bag {1, 2} rows from the {3, 4} rows
            xs = X[f.inbag_counts[t] > 0, 0]
            thr = f.threshold[t, 0]
            assert xs[xs <= 2].max() <= thr < xs[xs >= 3].min()
            assert f.n_nodes[t] == 3
    assert both > 100


def test_constant_feature_single_leaf():
    X = np.ones((30, 2))
    y = np.r_[np.zeros(20, int), np.ones(10, int)]
    f = fit_forest(X, y, ForestConfig(50, 1, rng_seed=0))
    assert (f.feature[:, 0] == -1).all()
    for t in range(f.num_trees):
        frac = np.bincount(y, weights=f.inbag_counts[t], minlength=2) / 30
        np.testing.assert_allclose(f.value[t, 0], frac)


def test_min_node_size_at_least_n_gives_stumps():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((25, 2))
    y = (X[:, 0] > 0).astype(int)
    f = fit_forest(X, y, ForestConfig(20, 25, rng_seed=1))
    assert (f.n_nodes == 1).all()


def test_noise_feature_gives_half(rng):
    X = np.zeros((200, 1))
    y = np.r_[np.zeros(100, int), np.ones(100, int)]
    probs = oob_probabilities(fit_forest(X, y, ForestConfig(1000, 10, rng_seed=2)), X).probs
    assert np.abs(probs - 0.5).max() < 0.05


def test_stump_priors():
    # single-leaf trees: E[OOB prob] = E[in-bag class fraction] = prior
    X = np.zeros((400, 1))
    y = np.r_[np.zeros(300, int), np.ones(100, int)]
    probs = oob_probabilities(fit_forest(X, y, ForestConfig(200, 400, rng_seed=5)), X).probs
    np.testing.assert_allclose(probs.mean(axis=0), [0.75, 0.25], atol=0.01)


def test_always_inbag_row_flagged():
    X = np.arange(6.0)[:, None]
    y = np.array([0, 1, 0, 1, 0, 1])
    f = fit_forest(X, y, ForestConfig(3, 1, rng_seed=0))
    # force row 0 in-bag everywhere by editing the recorded membership
    counts = f.inbag_counts.copy()
    counts[:, 0] = 1
    from dataclasses import replace

    g = replace(f, inbag_counts=counts, oob_leaf=None)
    out = oob_probabilities(g, X)
    assert out.coverage[0] == 0 and not out.covered[0]
    assert np.isnan(out.probs[0]).all()


def test_separable_classes():
    rng = np.random.default_rng(7)
    y = np.r_[np.zeros(100, int), np.ones(100, int)]
    X = np.where(y == 0, -3.0, 3.0)[:, None] + rng.standard_normal((200, 1))
    probs = oob_probabilities(fit_forest(X, y, ForestConfig(200, 10, rng_seed=7)), X).probs
    assert probs[np.arange(200), y].mean() >= 0.9


def test_no_zero_coverage_in_standard_runs():
    rng = np.random.default_rng(8)
    for n in (20, 50, 200):
        X = rng.standard_normal((n, 2))
        y = rng.integers(0, 2, n)
        y[:2] = (0, 1)
        out = oob_probabilities(fit_forest(X, y, ForestConfig(200, 10, rng_seed=n)), X)
        assert out.covered.all()
        frac = (fit_forest(X, y, ForestConfig(200, 10, rng_seed=n)).inbag_counts == 0).mean()
        assert abs(frac - (1 - 1 / n) ** n) < 0.03


@given(st.integers(0, 2**31), st.integers(5, 60), st.integers(1, 3), st.integers(2, 4), st.integers(1, 8))
def test_forest_invariants(seed, n, d, k, mns):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = rng.integers(0, k, n)
    y[:2] = (0, 1)
    f = fit_forest(X, y, ForestConfig(15, mns, rng_seed=seed), n_classes=k)
    assert (f.inbag_counts.sum(axis=1) == n).all()
    for t in range(f.num_trees):
        leaves = np.flatnonzero(f.feature[t, : f.n_nodes[t]] == -1)
        vals = f.value[t, leaves]
        assert (vals >= 0).all()
        np.testing.assert_allclose(vals.sum(axis=1), 1.0, atol=1e-12)
    out = oob_probabilities(f, X)
    assert (out.coverage <= f.num_trees).all()
    np.testing.assert_allclose(out.probs[out.covered].sum(axis=1), 1.0, atol=1e-12)
    slow = oob_probabilities(f, X, traverse=True)
    np.testing.assert_array_equal(slow.probs, out.probs)


def test_deterministic_across_threads():
    import numba

    from pklm.forest import set_num_threads

    rng = np.random.default_rng(9)
    X = rng.standard_normal((120, 3))
    y = rng.integers(0, 3, 120)
    runs = []
    for threads in sorted({1, numba.config.NUMBA_NUM_THREADS}):
        set_num_threads(threads)
        f = fit_forest(X, y, ForestConfig(60, 5, rng_seed=11))
        runs.append((f.threshold.copy(), oob_probabilities(f, X).probs))
    set_num_threads(numba.config.NUMBA_NUM_THREADS)
    again = fit_forest(X, y, ForestConfig(60, 5, rng_seed=11))
    np.testing.assert_array_equal(again.threshold, runs[0][0])
    for thr, probs in runs[1:]:
        np.testing.assert_array_equal(thr, runs[0][0])
        np.testing.assert_array_equal(probs, runs[0][1])


class TestValidation:
    def test_single_class(self):
        with pytest.raises(SingleClassError):
            fit_forest(np.ones((5, 1)), np.zeros(5, int))

    def test_empty(self):
        with pytest.raises(EmptyTrainingError):
            fit_forest(np.empty((0, 2)), np.empty(0, int))

    def test_missing_features(self):
        with pytest.raises(ValueError):
            fit_forest(np.array([[1.0], [np.nan]]), np.array([0, 1]))

    def test_mtry_must_be_full(self):
        with pytest.raises(ValueError):
            fit_forest(np.ones((4, 2)), np.array([0, 1, 0, 1]), ForestConfig(mtry=1))

    def test_config(self):
        with pytest.raises(ValueError):
            ForestConfig(num_trees=0)
        with pytest.raises(ValueError):
            ForestConfig(min_node_size=0)


def test_dump_readable():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    f = fit_forest(X, np.array([0, 0, 1, 1]), ForestConfig(5, 1, rng_seed=3))
    text = f.dump(0)
    assert "leaf" in text
    assert math.isfinite(f.value[0, 0, 0])
