"""Multi-class probability forests with out-of-bag class probabilities.

Trees are CART classifiers grown on bootstrap samples with Gini impurity and
every feature considered at each split. Leaves store the in-bag class
frequencies; a row's OOB probability is the average leaf vector over the
trees that did not sample it.

The kernels are compiled with numba. Bootstrap indices are drawn up front from
a single counter-based stream (row ``t`` of the draw belongs to tree ``t``),
so results do not depend on how trees are scheduled across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from numba import njit, prange

from .errors import EmptyTrainingError, SingleClassError


@dataclass(frozen=True)
class ForestConfig:
    num_trees: int = 200
    min_node_size: int = 10
    mtry: Optional[int] = None  # None means all features; any other value must equal it
    rng_seed: object = None

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")


@dataclass(frozen=True, eq=False)
class FittedForest:
    """Flat arrays describing ``num_trees`` trees.

    Node ``k`` of tree ``t`` is a leaf when ``feature[t, k] == -1``; otherwise
    rows go left when ``x <= threshold`` (numeric) or ``x == threshold``
    (categorical level code).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_nodes: np.ndarray
    inbag_counts: np.ndarray
    categorical: np.ndarray
    n_classes: int
    oob_leaf: Optional[np.ndarray] = None  # leaf reached by each OOB row, -1 when in-bag

    @property
    def num_trees(self) -> int:
        return self.feature.shape[0]

    @property
    def bootstrap_membership(self) -> np.ndarray:
        """In-bag multiplicity of each training row, one row per tree."""
        return self.inbag_counts

    def dump(self, tree: int = 0) -> str:
        """Plain-text rendering of one tree, for debugging."""
        lines = []

        def walk(node, depth):
            pad = "  " * depth
            f = int(self.feature[tree, node])
            if f < 0:
                probs = ", ".join(f"{v:.4g}" for v in self.value[tree, node])
                lines.append(f"{pad}leaf [{probs}]")
                return
            op = "==" if self.categorical[f] else "<="
            lines.append(f"{pad}x[{f}] {op} {self.threshold[tree, node]:.6g}")
            walk(int(self.left[tree, node]), depth + 1)
            walk(int(self.right[tree, node]), depth + 1)

        walk(0, 0)
        return "\n".join(lines)


@dataclass(frozen=True, eq=False)
class OobProbabilities:
    """``probs`` is ``n x K``; rows with zero coverage are ``NaN``."""

    probs: np.ndarray
    coverage: np.ndarray

    @property
    def covered(self) -> np.ndarray:
        return self.coverage > 0


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


@njit(cache=True)
def _grow_tree(X, y, n_classes, is_cat, counts, order, min_node_size,
               feat, thr, left, right, value, oob_leaf):
    n, d = X.shape
    m = 0
    for i in range(n):
        if counts[i] > 0:
            m += 1
    # out-of-bag rows ride along the partitions and land in their leaves
    orows = np.empty(n - m + 1, dtype=np.int64)
    obuf = np.empty(n - m + 1, dtype=np.int64)
    k = 0
    for i in range(n):
        orows[k] = i
        k += counts[i] == 0
        oob_leaf[i] = -1
    # per feature: distinct in-bag rows and their values, kept sorted within each node
    rows = np.empty((d, m + 1), dtype=np.int64)
    xs = np.empty((d, m + 1))
    for f in range(d):
        rf = rows[f]
        xf = xs[f]
        of = order[f]
        k = 0
        for s in range(n):
            r = of[s]
            rf[k] = r
            xf[k] = X[r, f]
            k += counts[r] > 0
    rbuf = np.empty(m, dtype=np.int64)
    xbuf = np.empty(m)
    goes_left = np.zeros(n, dtype=np.bool_)
    wt = counts.astype(np.float64)
    wt1 = wt * (y == 1)
    cls = np.zeros(n_classes)
    lcnt = np.zeros(n_classes)
    binary = n_classes == 2

    stack_node = np.empty(2 * m + 2, dtype=np.int64)
    stack_start = np.empty(2 * m + 2, dtype=np.int64)
    stack_end = np.empty(2 * m + 2, dtype=np.int64)
    stack_ostart = np.empty(2 * m + 2, dtype=np.int64)
    stack_oend = np.empty(2 * m + 2, dtype=np.int64)
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    stack_ostart[0] = 0
    stack_oend[0] = n - m
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        ostart = stack_ostart[top]
        oend = stack_oend[top]

        cls[:] = 0.0
        for s in range(start, end):
            r = rows[0, s]
            cls[y[r]] += wt[r]
        w = 0.0
        sq = 0.0
        nonzero = 0
        for c in range(n_classes):
            w += cls[c]
            sq += cls[c] * cls[c]
            if cls[c] > 0:
                nonzero += 1

        best_f = -1
        best_thr = 0.0
        if w > min_node_size and nonzero > 1:
            # maximise sum_c l_c^2 / w_l + sum_c r_c^2 / w_r (equivalent to minimising Gini)
            tol = 1e-12 * w
            best = sq / w + tol
            for f in range(d):
                if is_cat[f]:
                    s = start
                    while s < end:
                        v = xs[f, s]
                        lcnt[:] = 0.0
                        wl = 0.0
                        e = s
                        while e < end and xs[f, e] == v:
                            r = rows[f, e]
                            lcnt[y[r]] += wt[r]
                            wl += wt[r]
                            e += 1
                        if wl < w:
                            wr = w - wl
                            sl = 0.0
                            sr = 0.0
                            for c in range(n_classes):
                                sl += lcnt[c] * lcnt[c]
                                rc = cls[c] - lcnt[c]
                                sr += rc * rc
                            score = sl / wl + sr / wr
                            if score > best:
                                best = score + tol
                                best_f = f
                                best_thr = v
                        s = e
                elif binary:
                    rf = rows[f]
                    xf = xs[f]
                    c1 = cls[1]
                    l1 = 0.0
                    wl = 0.0
                    for s in range(start, end - 1):
                        r = rf[s]
                        wl += wt[r]
                        l1 += wt1[r]
                        v = xf[s]
                        vn = xf[s + 1]
                        if v < vn:
                            wr = w - wl
                            l0 = wl - l1
                            r1 = c1 - l1
                            r0 = wr - r1
                            num = (l0 * l0 + l1 * l1) * wr + (r0 * r0 + r1 * r1) * wl
                            den = wl * wr
                            if num > best * den:
                                best = num / den + tol
                                best_f = f
                                mid = 0.5 * (v + vn)
                                best_thr = mid if mid < vn else v
                else:
                    lcnt[:] = 0.0
                    wl = 0.0
                    for s in range(start, end - 1):
                        r = rows[f, s]
                        lcnt[y[r]] += wt[r]
                        wl += wt[r]
                        v = xs[f, s]
                        vn = xs[f, s + 1]
                        if v < vn:
                            wr = w - wl
                            sl = 0.0
                            sr = 0.0
                            for c in range(n_classes):
                                sl += lcnt[c] * lcnt[c]
                                rc = cls[c] - lcnt[c]
                                sr += rc * rc
                            num = sl * wr + sr * wl
                            den = wl * wr
                            if num > best * den:
                                best = num / den + tol
                                best_f = f
                                mid = 0.5 * (v + vn)
                                best_thr = mid if mid < vn else v

        if best_f < 0:
            feat[node] = -1
            for c in range(n_classes):
                value[node, c] = cls[c] / w
            for s in range(ostart, oend):
                oob_leaf[orows[s]] = node
            continue

        cat = is_cat[best_f]
        for s in range(start, end):
            x = xs[best_f, s]
            goes_left[rows[best_f, s]] = (x == best_thr) if cat else (x <= best_thr)
        nl = 0
        for f in range(d):
            rf = rows[f]
            xf = xs[f]
            nl = start
            nr = 0
            for s in range(start, end):
                r = rf[s]
                x = xf[s]
                g = goes_left[r]
                rf[nl] = r
                xf[nl] = x
                rbuf[nr] = r
                xbuf[nr] = x
                nl += g
                nr += 1 - g
            for q in range(nr):
                rf[nl + q] = rbuf[q]
                xf[nl + q] = xbuf[q]
            nl -= start
        mid_pos = start + nl
        nl = ostart
        nr = 0
        for s in range(ostart, oend):
            r = orows[s]
            x = X[r, best_f]
            g = (x == best_thr) if cat else (x <= best_thr)
            orows[nl] = r
            obuf[nr] = r
            nl += g
            nr += 1 - g
        for q in range(nr):
            orows[nl + q] = obuf[q]
        omid = nl

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feat[node] = best_f
        thr[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack_node[top] = rid
        stack_start[top] = mid_pos
        stack_end[top] = end
        stack_ostart[top] = omid
        stack_oend[top] = oend
        top += 1
        stack_node[top] = lid
        stack_start[top] = start
        stack_end[top] = mid_pos
        stack_ostart[top] = ostart
        stack_oend[top] = omid
        top += 1
    return n_nodes


@njit(parallel=True, cache=True)
def _grow_forest(X, y, n_classes, is_cat, boot, order, min_node_size):
    n_trees, n = boot.shape
    max_nodes = 2 * n + 1
    counts = np.zeros((n_trees, n), dtype=np.int32)
    feat = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    thr = np.zeros((n_trees, max_nodes))
    left = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    right = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    value = np.zeros((n_trees, max_nodes, n_classes))
    n_nodes = np.zeros(n_trees, dtype=np.int64)
    oob_leaf = np.empty((n_trees, n), dtype=np.int32)
    for t in prange(n_trees):
        for s in range(n):
            counts[t, boot[t, s]] += 1
        n_nodes[t] = _grow_tree(X, y, n_classes, is_cat, counts[t], order, min_node_size,
                                feat[t], thr[t], left[t], right[t], value[t], oob_leaf[t])
    return feat, thr, left, right, value, n_nodes, counts, oob_leaf


@njit(parallel=True, cache=True)
def _oob_accumulate(oob_leaf, value):
    n_trees, n = oob_leaf.shape
    n_classes = value.shape[2]
    acc = np.zeros((n, n_classes))
    cov = np.zeros(n, dtype=np.int64)
    for i in prange(n):
        for t in range(n_trees):
            leaf = oob_leaf[t, i]
            if leaf >= 0:
                for c in range(n_classes):
                    acc[i, c] += value[t, leaf, c]
                cov[i] += 1
    return acc, cov


@njit(parallel=True, cache=True)
def _oob_predict(X, is_cat, counts, feat, thr, left, right, value):
    n_trees, n = counts.shape
    n_classes = value.shape[2]
    acc = np.zeros((n, n_classes))
    cov = np.zeros(n, dtype=np.int64)
    # row blocks keep one tree hot in cache; every row still sums trees in order
    block = 64
    n_blocks = (n + block - 1) // block
    for b in prange(n_blocks):
        lo = b * block
        hi = min(n, lo + block)
        for t in range(n_trees):
            ft = feat[t]
            tt = thr[t]
            lt = left[t]
            rt = right[t]
            ct = counts[t]
            for i in range(lo, hi):
                if ct[i] == 0:
                    node = 0
                    f = ft[0]
                    while f >= 0:
                        x = X[i, f]
                        if is_cat[f]:
                            go_left = x == tt[node]
                        else:
                            go_left = x <= tt[node]
                        node = lt[node] if go_left else rt[node]
                        f = ft[node]
                    for c in range(n_classes):
                        acc[i, c] += value[t, node, c]
                    cov[i] += 1
    return acc, cov


def _check_training(features, labels, n_classes):
    X = np.ascontiguousarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyTrainingError("no training rows or no features")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must have one entry per feature row")
    if np.isnan(X).any():
        raise ValueError("features must not contain missing values")
    if y.min() < 0:
        raise ValueError("labels must be non-negative class ids")
    if np.unique(y).size < 2:
        raise SingleClassError("training labels contain a single class")
    k = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.max() >= k:
        raise ValueError("label exceeds n_classes")
    return X, y, k


def fit_forest(features, labels, config: ForestConfig = ForestConfig(),
               categorical=None, n_classes: Optional[int] = None) -> FittedForest:
    """Grow ``config.num_trees`` probability trees on ``(features, labels)``.

    ``labels`` are class ids ``0..K-1``. ``categorical`` flags columns whose
    values are level codes; those split one level against the rest.
    """
    X, y, k = _check_training(features, labels, n_classes)
    n, d = X.shape
    if config.mtry is not None and config.mtry != d:
        raise ValueError(f"mtry must equal the number of features ({d})")
    is_cat = np.zeros(d, dtype=np.bool_) if categorical is None else np.asarray(categorical, dtype=np.bool_)
    rng = make_rng(config.rng_seed)
    boot = rng.integers(0, n, size=(config.num_trees, n))
    order = np.argsort(X, axis=0, kind="stable").T.copy()
    feat, thr, left, right, value, n_nodes, counts, oob_leaf = _grow_forest(
        X, y, k, is_cat, boot, order, config.min_node_size
    )
    return FittedForest(feat, thr, left, right, value, n_nodes, counts, is_cat, k, oob_leaf)


def oob_probabilities(forest: FittedForest, features, traverse: bool = False) -> OobProbabilities:
    """Average leaf frequencies over the trees where each row is out-of-bag.

    ``features`` must be the training matrix. Leaves recorded while growing
    are used unless ``traverse`` is set, in which case every OOB row is
    dropped down each tree again (same result, slower).
    """
    X = np.ascontiguousarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != forest.inbag_counts.shape[1]:
        raise ValueError("features must be the training matrix")
    if forest.oob_leaf is not None and not traverse:
        acc, cov = _oob_accumulate(forest.oob_leaf, forest.value)
    else:
        acc, cov = _oob_predict(X, forest.categorical, forest.inbag_counts, forest.feature,
                                forest.threshold, forest.left, forest.right, forest.value)
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = acc / cov[:, None]
    probs[cov == 0] = np.nan
    return OobProbabilities(probs, cov)


def set_num_threads(n: Optional[int]) -> int:
    """Set the kernel thread count (clipped to what numba was started with)."""
    if n is None:
        return numba.get_num_threads()
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n
