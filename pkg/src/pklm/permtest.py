"""The full MCAR test: random projections, forests, and the row-permutation null."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import DataMatrix, build_mask, extract_patterns
from .errors import (
    DegenerateLabelingError,
    InsufficientDataError,
    NoMissingnessWarning,
    NoValidClassTermError,
)
from .forest import ForestConfig, fit_forest, make_rng, oob_probabilities
from .projection import (
    ProjectionPair,
    collapse_labels,
    complete_rows,
    pattern_classes,
    sample_projection_pair,
)
from .statistic import permuted_statistics, projection_statistic

NO_MISSINGNESS = "NoMissingness"
CLASS_RULES = ("merge", "select")

# spawn-key prefixes for the independent random streams of one test
_PERM_STREAM = 0
_PAIR_STREAM = 1
_FOREST_STREAM = 2


@dataclass(frozen=True)
class TestConfig:
    """Hyperparameters of :func:`pklm_test`.

    ``class_rule`` decides how ``size_resp_set`` is enforced. ``"select"``
    drops columns of ``B`` (in random order) until its patterns form at most
    ``size_resp_set`` classes. ``"merge"`` keeps ``B`` and folds the least
    frequent patterns into one residual class.
    """

    __test__ = False  # not a pytest class

    num_proj: int = 100
    nrep: int = 30
    num_trees_per_proj: int = 200
    min_node_size: int = 10
    size_resp_set: int = 2
    seed: Optional[int] = None
    compute_partial: bool = False
    max_attempts: int = 50
    class_rule: str = "select"

    def __post_init__(self):
        if self.num_proj < 1 or self.nrep < 1:
            raise ValueError("num_proj and nrep must be >= 1")
        if self.num_trees_per_proj < 1 or self.min_node_size < 1:
            raise ValueError("num_trees_per_proj and min_node_size must be >= 1")
        if self.size_resp_set < 2:
            raise ValueError("size_resp_set must be >= 2")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.class_rule not in CLASS_RULES:
            raise ValueError(f"class_rule must be one of {CLASS_RULES}")


@dataclass(frozen=True)
class ProjectionRecord:
    index: int
    a_dims: tuple
    b_dims: tuple
    n_rows: int
    n_classes: int
    value: float
    attempts: int
    class_terms: tuple = ()


@dataclass(eq=False)
class TestReport:
    __test__ = False

    statistic: float
    null_statistics: np.ndarray
    p_value: float
    n_cols: int
    seed: Optional[int] = None
    partial_p_values: Optional[dict] = None
    projections: list = field(default_factory=list)
    projection_null_values: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    skipped_projections: int = 0
    forest_fits: int = 0
    warnings: list = field(default_factory=list)
    config: Optional[TestConfig] = None

    @property
    def retained_projections(self) -> int:
        return len(self.projections)


def p_value(observed: float, nulls) -> float:
    """``(#{nulls >= observed} + 1) / (L + 1)``."""
    nulls = np.asarray(nulls, dtype=np.float64)
    return float((np.count_nonzero(nulls >= observed) + 1) / (nulls.size + 1))


def partial_p_values(report: TestReport) -> dict:
    """P-value per variable ``k`` using only projections whose ``B`` excludes ``k``.

    Variables for which no such projection was retained map to ``None``.
    """
    out = {}
    obs = np.array([rec.value for rec in report.projections])
    nulls = report.projection_null_values
    for k in range(report.n_cols):
        keep = np.array([k not in rec.b_dims for rec in report.projections], dtype=bool)
        if not keep.any():
            out[k] = None
            continue
        out[k] = p_value(obs[keep].mean(), nulls[keep].mean(axis=0))
    return out


def _stream(seed, *key):
    return make_rng(np.random.SeedSequence(seed, spawn_key=key))


def _resolve_seed(seed):
    if seed is None:
        return int(np.random.SeedSequence().entropy)
    return int(seed)


def _values(data):
    if isinstance(data, DataMatrix):
        return data.values, data.categorical
    values = np.asarray(data, dtype=np.float64)
    return values, np.zeros(values.shape[1], dtype=bool)


def pklm_test(data, config: TestConfig = TestConfig()) -> TestReport:
    """Test the MCAR hypothesis for ``data`` (a :class:`DataMatrix` or a float
    array with ``NaN`` holes).

    The ``nrep`` row permutations of the mask are drawn once and shared by
    every projection. Each projection fits one forest on the observed labels;
    its permuted statistics reuse that forest's OOB probabilities, with the
    set of complete rows on ``A`` kept fixed.
    """
    values, categorical = _values(data)
    mask = build_mask(values)
    bits = mask.bits
    n, p = bits.shape
    seed = _resolve_seed(config.seed)

    if extract_patterns(mask).n_patterns < 2:
        warnings.warn("data contain a single missingness pattern", NoMissingnessWarning, stacklevel=2)
        return TestReport(
            statistic=0.0,
            null_statistics=np.zeros(0),
            p_value=1.0,
            n_cols=p,
            seed=seed,
            partial_p_values={k: None for k in range(p)} if config.compute_partial else None,
            warnings=[NO_MISSINGNESS],
            config=config,
        )

    perm_rng = _stream(seed, _PERM_STREAM)
    perms = np.stack([perm_rng.permutation(n) for _ in range(config.nrep)])

    records, null_rows = [], []
    skipped = fits = 0
    for j in range(config.num_proj):
        pair_rng = _stream(seed, _PAIR_STREAM, j)
        for attempt in range(1, config.max_attempts + 1):
            pair = sample_projection_pair(pair_rng, p)
            rows = complete_rows(bits, pair.a_dims)
            if rows.size == 0:
                continue
            if config.class_rule == "select":
                pair = _shrink_b(bits, rows, pair, config.size_resp_set, pair_rng)
            try:
                labeling = collapse_labels(bits, rows, pair.b_dims, config.size_resp_set)
            except DegenerateLabelingError:
                continue
            result = _evaluate(values, categorical, bits, perms, pair, labeling, config,
                               _stream(seed, _FOREST_STREAM, j))
            fits += 1
            if result is None:
                continue
            observed, nulls, terms = result
            records.append(ProjectionRecord(
                index=j,
                a_dims=pair.a_dims,
                b_dims=pair.b_dims,
                n_rows=int(rows.size),
                n_classes=labeling.n_classes,
                value=observed,
                attempts=attempt,
                class_terms=tuple(terms),
            ))
            null_rows.append(nulls)
            break
        else:
            skipped += 1

    if not records:
        raise InsufficientDataError(
            f"no informative projection found in {config.num_proj} draws "
            f"of up to {config.max_attempts} attempts each"
        )

    null_matrix = np.vstack(null_rows)
    statistic = float(np.mean([rec.value for rec in records]))
    null_stats = null_matrix.mean(axis=0)
    report = TestReport(
        statistic=statistic,
        null_statistics=null_stats,
        p_value=p_value(statistic, null_stats),
        n_cols=p,
        seed=seed,
        projections=records,
        projection_null_values=null_matrix,
        skipped_projections=skipped,
        forest_fits=fits,
        config=config,
    )
    if config.compute_partial:
        report.partial_p_values = partial_p_values(report)
    return report


def _shrink_b(bits, rows, pair, max_classes, rng):
    """Drop columns of ``B`` in random order until its patterns over ``rows``
    form at most ``max_classes`` groups (a single column always qualifies
    when ``max_classes >= 2``)."""
    b = list(rng.permutation(np.asarray(pair.b_dims)))
    while len(b) > 1:
        sub = bits[np.ix_(rows, b)]
        if np.unique(sub, axis=0).shape[0] <= max_classes:
            break
        b.pop()
    return ProjectionPair(pair.a_dims, tuple(sorted(int(v) for v in b)))


def _evaluate(values, categorical, bits, perms, pair: ProjectionPair, labeling, config, rng):
    """Fit one forest and score the observed and permuted labelings.

    Returns ``None`` when the observed labeling yields no valid class term.
    """
    rows = labeling.row_ids
    a = list(pair.a_dims)
    features = values[np.ix_(rows, a)]
    forest = fit_forest(
        features,
        labeling.labels,
        ForestConfig(config.num_trees_per_proj, config.min_node_size, len(a), rng),
        categorical=categorical[a],
        n_classes=labeling.n_classes,
    )
    oob = oob_probabilities(forest, features)
    try:
        stat = projection_statistic(labeling.labels, oob, labeling.n_classes)
    except NoValidClassTermError:
        return None
    # permuted mask row i is original row perms[l, i]
    cls_of_row = pattern_classes(bits, pair.b_dims, labeling)
    label_matrix = np.vstack([labeling.labels[None, :], cls_of_row[perms[:, rows]]])
    scored = permuted_statistics(label_matrix, oob)
    return float(scored[0]), scored[1:], [(int(g), float(t)) for g, t in stat.per_class_terms]
