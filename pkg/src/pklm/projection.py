"""Projection pairs and the collapsed class labels they induce."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MissingnessMask
from .errors import DegenerateLabelingError, DimensionTooSmallError

NO_CLASS = -1
_MAX_CODE_WIDTH = 62


@dataclass(frozen=True)
class ProjectionPair:
    """Disjoint column sets: ``a_dims`` are features, ``b_dims`` form labels."""

    a_dims: tuple
    b_dims: tuple

    def __post_init__(self):
        a, b = tuple(int(x) for x in self.a_dims), tuple(int(x) for x in self.b_dims)
        if not a or not b:
            raise ValueError("both index sets must be non-empty")
        if set(a) & set(b):
            raise ValueError("index sets must be disjoint")
        object.__setattr__(self, "a_dims", a)
        object.__setattr__(self, "b_dims", b)


@dataclass(frozen=True, eq=False)
class CollapsedLabeling:
    """Class labels for the rows complete on ``A``, grouped by their ``B`` pattern.

    ``pattern_to_class`` maps each ``B``-restricted pattern (a tuple of bits)
    seen among ``row_ids`` to its class id, including patterns merged into the
    residual class.
    """

    row_ids: np.ndarray
    labels: np.ndarray
    pattern_to_class: dict
    class_counts: np.ndarray
    b_dims: tuple = ()

    @property
    def n_classes(self) -> int:
        return int(self.class_counts.size)


def _bits(mask):
    return mask.bits if isinstance(mask, MissingnessMask) else np.asarray(mask, dtype=np.uint8)


def sample_projection_pair(rng: np.random.Generator, p: int) -> ProjectionPair:
    """Draw ``(A, B)``: a uniform size for ``A`` in ``1..p-1``, then ``A``
    without replacement; a uniform size for ``B`` in ``1..p-|A|``, then ``B``
    without replacement from the remaining columns."""
    if p < 2:
        raise DimensionTooSmallError(f"need p >= 2 to draw a projection pair, got {p}")
    r1 = int(rng.integers(1, p))
    a = rng.choice(p, size=r1, replace=False)
    rest = np.setdiff1d(np.arange(p), a)
    r2 = int(rng.integers(1, p - r1 + 1))
    b = rng.choice(rest, size=r2, replace=False)
    return ProjectionPair(tuple(sorted(a.tolist())), tuple(sorted(b.tolist())))


def complete_rows(mask, a_dims) -> np.ndarray:
    """Rows observed on every column of ``a_dims``, ascending."""
    bits = _bits(mask)
    return np.flatnonzero(~bits[:, list(a_dims)].any(axis=1))


def _row_keys(sub: np.ndarray):
    """Hashable/comparable key per row of a 0/1 matrix."""
    width = sub.shape[1]
    if width <= _MAX_CODE_WIDTH:
        weights = np.left_shift(np.int64(1), np.arange(width, dtype=np.int64))
        return sub.astype(np.int64) @ weights
    return np.array([row.tobytes() for row in np.ascontiguousarray(sub, dtype=np.uint8)], dtype=object)


def collapse_labels(mask, row_ids, b_dims, max_classes: int) -> CollapsedLabeling:
    """Label ``row_ids`` by their missingness pattern restricted to ``b_dims``.

    Class ids follow decreasing pattern frequency (ties: first occurrence).
    When more than ``max_classes`` patterns occur, the ``max_classes - 1``
    most frequent keep their own class and the rest share a residual class.
    """
    if max_classes < 2:
        raise ValueError("max_classes must be at least 2")
    bits = _bits(mask)
    row_ids = np.asarray(row_ids, dtype=np.int64)
    b_dims = tuple(int(b) for b in b_dims)
    if row_ids.size == 0:
        raise DegenerateLabelingError("no rows are complete on A")
    sub = bits[np.ix_(row_ids, list(b_dims))]
    keys = _row_keys(sub)
    if keys.dtype == object:
        seen = {}
        inverse = np.empty(keys.size, dtype=np.int64)
        for i, k in enumerate(keys):
            inverse[i] = seen.setdefault(k, len(seen))
        n_pat = len(seen)
        first = np.zeros(n_pat, dtype=np.int64)
        for k, idx in seen.items():
            first[idx] = np.argmax(inverse == idx)
        counts = np.bincount(inverse, minlength=n_pat)
    else:
        _, first, inverse, counts = np.unique(
            keys, return_index=True, return_inverse=True, return_counts=True
        )
        inverse = inverse.reshape(-1)
        n_pat = counts.size
    if n_pat < 2:
        raise DegenerateLabelingError("all rows share one pattern on B")

    # rank patterns: frequency descending, then first occurrence
    order = np.lexsort((first, -counts))
    rank = np.empty(n_pat, dtype=np.int64)
    rank[order] = np.arange(n_pat)
    pattern_class = np.minimum(rank, max_classes - 1)
    labels = pattern_class[inverse]
    k = min(n_pat, max_classes)
    class_counts = np.bincount(labels, minlength=k)

    pattern_to_class = {}
    for idx in range(n_pat):
        row = int(np.argmax(inverse == idx)) if keys.dtype == object else int(first[idx])
        pattern_to_class[tuple(int(v) for v in sub[row])] = int(pattern_class[idx])
    return CollapsedLabeling(row_ids, labels, pattern_to_class, class_counts, b_dims)


def pattern_classes(bits: np.ndarray, b_dims, labeling: CollapsedLabeling) -> np.ndarray:
    """Class id of every row of ``bits`` under ``labeling`` (``NO_CLASS`` if unseen)."""
    sub = np.asarray(bits, dtype=np.uint8)[:, list(b_dims)]
    keys = _row_keys(sub)
    known = list(labeling.pattern_to_class.items())
    known_sub = np.array([pat for pat, _ in known], dtype=np.uint8).reshape(len(known), len(b_dims))
    known_keys = _row_keys(known_sub)
    known_cls = np.array([c for _, c in known], dtype=np.int64)
    if keys.dtype == object:
        lookup = dict(zip(known_keys.tolist(), known_cls.tolist()))
        return np.array([lookup.get(k, NO_CLASS) for k in keys], dtype=np.int64)
    order = np.argsort(known_keys)
    sorted_keys = known_keys[order]
    pos = np.clip(np.searchsorted(sorted_keys, keys), 0, sorted_keys.size - 1)
    return np.where(sorted_keys[pos] == keys, known_cls[order][pos], NO_CLASS)


def relabel_under_permutation(mask_perm, labeling: CollapsedLabeling, b_dims) -> np.ndarray:
    """Labels for the frozen rows of ``labeling`` read from a row-permuted mask.

    Row ``i`` of ``labeling.row_ids`` takes the class of the ``B`` pattern that
    ``mask_perm`` holds at row ``i``; patterns the labeling never saw map to
    ``NO_CLASS``.
    """
    bits = _bits(mask_perm)
    return pattern_classes(bits[labeling.row_ids], b_dims, labeling)
