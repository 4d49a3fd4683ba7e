"""Log-odds statistics built from out-of-bag class probabilities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyClassSideError, NoProjectionsError, NoValidClassTermError
from .forest import OobProbabilities

PROB_FLOOR = 1e-9


@dataclass(frozen=True)
class ProjectionStatistic:
    value: float
    per_class_terms: list = field(default_factory=list)  # (class id, term) pairs
    n_used_rows: int = 0


def truncate_prob(x):
    """Clip probabilities into ``[1e-9, 1 - 1e-9]``."""
    return np.minimum(np.maximum(x, PROB_FLOOR), 1.0 - PROB_FLOOR)


def log_odds(p):
    p = truncate_prob(np.asarray(p, dtype=np.float64))
    return np.log(p / (1.0 - p))


def _prob_matrix(probs):
    if isinstance(probs, OobProbabilities):
        return probs.probs
    return np.asarray(probs, dtype=np.float64)


def class_term(g: int, probs, in_class, out_class) -> float:
    """Mean log-odds of class ``g`` over ``in_class`` minus the same mean over ``out_class``.

    ``probs`` is an ``n x K`` probability matrix (or :class:`OobProbabilities`);
    the two index arrays select its rows.
    """
    in_class = np.asarray(in_class, dtype=np.int64)
    out_class = np.asarray(out_class, dtype=np.int64)
    if in_class.size == 0 or out_class.size == 0:
        raise EmptyClassSideError(f"class {g} has an empty side")
    lo = log_odds(_prob_matrix(probs)[:, g])
    return float(lo[in_class].mean() - lo[out_class].mean())


def _usable_rows(probs, coverage=None):
    P = _prob_matrix(probs)
    if coverage is None and isinstance(probs, OobProbabilities):
        coverage = probs.coverage
    usable = ~np.isnan(P).any(axis=1)
    if coverage is not None:
        usable &= np.asarray(coverage) > 0
    return usable


def projection_statistic(labels, probs, n_classes=None) -> ProjectionStatistic:
    """Sum over classes of :func:`class_term`.

    ``labels`` holds one class id per probability row; negative ids mean
    "no class" (such rows only ever sit on the complement side). Rows without
    OOB coverage are left out, and a class with an empty side contributes
    no term.
    """
    P = _prob_matrix(probs)
    labels = np.asarray(labels, dtype=np.int64)
    k = P.shape[1] if n_classes is None else int(n_classes)
    usable = np.flatnonzero(_usable_rows(probs))
    lab = labels[usable]
    terms = []
    for g in range(k):
        try:
            terms.append((g, class_term(g, P, usable[lab == g], usable[lab != g])))
        except EmptyClassSideError:
            continue
    if not terms:
        raise NoValidClassTermError("no class has rows on both sides")
    return ProjectionStatistic(float(sum(t for _, t in terms)), terms, int(usable.size))


def permuted_statistics(label_matrix, probs) -> np.ndarray:
    """Projection statistic for many label vectors at once.

    ``label_matrix`` is ``L x n`` (one relabeling per row). The same
    coverage and empty-side rules as :func:`projection_statistic` apply;
    a relabeling with no valid class term scores 0.
    """
    P = _prob_matrix(probs)
    lab = np.atleast_2d(np.asarray(label_matrix, dtype=np.int64))
    usable = _usable_rows(probs)
    lo = log_odds(np.where(usable[:, None], P, 0.5))[usable]
    lab = lab[:, usable]
    m = lo.shape[0]
    out = np.zeros(lab.shape[0])
    for g in range(P.shape[1]):
        in_g = lab == g
        cnt = in_g.sum(axis=1)
        sum_g = in_g @ lo[:, g]
        total = lo[:, g].sum()
        ok = (cnt > 0) & (cnt < m)
        with np.errstate(invalid="ignore", divide="ignore"):
            term = sum_g / cnt - (total - sum_g) / (m - cnt)
        out += np.where(ok, term, 0.0)
    return out


def aggregate(values) -> float:
    """Average per-projection statistics."""
    vals = [v.value if isinstance(v, ProjectionStatistic) else float(v) for v in values]
    if not vals:
        raise NoProjectionsError("no projection statistics to average")
    return float(np.mean(vals))


def one_sided_statistic(p_g, prior: float) -> float:
    """Mean over the rows of class ``g`` of the log-odds of ``g`` shifted by
    the prior log-odds; ``p_g`` holds ``P(class g | x)`` for those rows."""
    return float(np.mean(log_odds(p_g)) - np.log(prior / (1.0 - prior)))
