"""Synthetic benchmark data and missingness mechanisms.

Distribution cases (all rows i.i.d.; ``S`` has unit diagonal and 0.7 elsewhere):

1. N(0, I)                         5. independent uniform(0, 1)
2. N(0, S)                         6. S^(1/2) times a case-5 vector
3. multivariate t4 with scale I    7. Z + 0.1 Z^3, Z standard normal
4. multivariate t4 with scale S    8. independent Weibull(scale 1, shape 2)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import DataMatrix
from .errors import BadSpecError

MECHANISMS = ("mcar", "mar", "none")
CORRELATION = 0.7
YUAN_CUTS = (1.932, 0.314)


@dataclass(frozen=True)
class SimSpec:
    case_id: int
    n: int
    p: int
    r: float = 0.65
    mechanism: str = "mcar"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.case_id not in range(1, 9):
            raise BadSpecError(f"case must be in 1..8, got {self.case_id}")
        if self.n < 1:
            raise BadSpecError("n must be >= 1")
        if self.p < 2:
            raise BadSpecError(f"p must be >= 2, got {self.p}")
        if not 0.0 < self.r <= 1.0:
            raise BadSpecError(f"r must lie in (0, 1], got {self.r}")
        if self.mechanism not in MECHANISMS:
            raise BadSpecError(f"unknown mechanism {self.mechanism!r}")


def correlated_cov(p: int, rho: float = CORRELATION) -> np.ndarray:
    return np.full((p, p), rho) + (1.0 - rho) * np.eye(p)


def sqrtm_psd(a: np.ndarray) -> np.ndarray:
    """Symmetric square root of a positive semi-definite matrix."""
    w, v = np.linalg.eigh(a)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def gen_case(spec: SimSpec, rng=None) -> DataMatrix:
    """Draw a fully observed ``n x p`` sample from distribution ``spec.case_id``."""
    rng = _rng(spec.seed if rng is None else rng)
    n, p, case = spec.n, spec.p, spec.case_id
    root = sqrtm_psd(correlated_cov(p))
    if case in (1, 2, 3, 4):
        x = rng.standard_normal((n, p))
        if case in (2, 4):
            x = x @ root
        if case in (3, 4):
            x = x * np.sqrt(4.0 / rng.chisquare(4, size=n))[:, None]
    elif case in (5, 6):
        x = rng.uniform(0.0, 1.0, (n, p))
        if case == 6:
            x = x @ root
    elif case == 7:
        z = rng.standard_normal((n, p))
        x = z + 0.1 * z**3
    else:
        x = rng.weibull(2.0, (n, p))
    return DataMatrix.from_array(x)


def _redraw_full_rows(mask, prob, rng, cols=None):
    cols = np.arange(mask.shape[1]) if cols is None else cols
    while True:
        full = np.flatnonzero(mask.all(axis=1))
        if full.size == 0:
            return mask
        mask[np.ix_(full, cols)] = rng.random((full.size, cols.size)) < prob


def _values(data):
    return data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)


def _wrap(data, values):
    if isinstance(data, DataMatrix):
        return data.with_values(values)
    return DataMatrix.from_array(values)


def ampute_mcar(data, r: float, rng=None) -> DataMatrix:
    """Blank every cell independently with probability ``1 - r**(1/p)``.

    Rows that end up entirely missing are redrawn.
    """
    rng = _rng(rng)
    x = np.array(_values(data), dtype=np.float64)
    n, p = x.shape
    prob = 1.0 - r ** (1.0 / p)
    mask = rng.random((n, p)) < prob
    mask = _redraw_full_rows(mask, prob, rng)
    x[mask] = np.nan
    return _wrap(data, x)


def mar_mask_assignment(first_col, r: float, p: int, rng) -> np.ndarray:
    """Build the MAR mask for a column-1 driven mechanism.

    Column 1 stays observed; other cells are missing with probability
    ``1 - r**(1/(p-1))``. The mask rows are split into a complete and a
    missing group, each shuffled. Data rows are then served in order: a row
    below the column-1 mean takes the next complete mask row with
    probability 1/6 (else the next missing one), a row at or above the mean
    with probability 5/6. An exhausted group defers to the other.
    """
    n = first_col.shape[0]
    prob = 1.0 - r ** (1.0 / (p - 1))
    mask = np.zeros((n, p), dtype=bool)
    mask[:, 1:] = rng.random((n, p - 1)) < prob
    incomplete = mask.any(axis=1)
    complete_pool = list(rng.permutation(np.flatnonzero(~incomplete)))
    missing_pool = list(rng.permutation(np.flatnonzero(incomplete)))
    mean = first_col.mean()
    u = rng.random(n)
    out = np.empty((n, p), dtype=bool)
    for i in range(n):
        p_complete = 1.0 / 6.0 if first_col[i] < mean else 5.0 / 6.0
        want_complete = u[i] < p_complete
        if want_complete and not complete_pool:
            want_complete = False
        elif not want_complete and not missing_pool:
            want_complete = True
        source = complete_pool if want_complete else missing_pool
        out[i] = mask[source.pop()]
    return out


def ampute_mar(data, r: float, rng=None) -> DataMatrix:
    """MAR amputation driven by the first column (kept fully observed)."""
    rng = _rng(rng)
    x = np.array(_values(data), dtype=np.float64)
    n, p = x.shape
    if p < 2:
        raise BadSpecError("MAR amputation needs p >= 2")
    if np.isnan(x[:, 0]).any():
        raise BadSpecError("first column must be fully observed")
    mask = mar_mask_assignment(x[:, 0], r, p, rng)
    x[mask] = np.nan
    return _wrap(data, x)


def simulate(spec: SimSpec, rng=None) -> DataMatrix:
    """Draw a case sample and apply ``spec.mechanism``."""
    rng = _rng(spec.seed if rng is None else rng)
    full = gen_case(spec, rng)
    if spec.mechanism == "mcar":
        return ampute_mcar(full, spec.r, rng)
    if spec.mechanism == "mar":
        return ampute_mar(full, spec.r, rng)
    return full


def yuan_example(n: int, rng=None) -> DataMatrix:
    """Two correlated normals; ``X2`` is missing on three bands of ``X1``
    chosen so that group means and variances barely differ."""
    if n < 1:
        raise BadSpecError("n must be >= 1")
    rng = _rng(rng)
    z = rng.standard_normal((n, 2))
    x1 = z[:, 0]
    x2 = 0.5 * z[:, 0] + np.sqrt(0.75) * z[:, 1]
    outer, inner = YUAN_CUTS
    drop = (x1 <= -outer) | ((x1 > -inner) & (x1 <= inner)) | (x1 > outer)
    x2 = np.where(drop, np.nan, x2)
    return DataMatrix.from_array(np.column_stack([x1, x2]))


def partial_example(n: int = 500, p: int = 4, r: float = 0.65, threshold: float = 0.5,
                    rng=None) -> DataMatrix:
    """Gaussian data whose first column is missing exactly when the second
    exceeds ``threshold``; the other columns get MCAR holes with cell
    probability ``1 - r**(1/p)``."""
    if p < 3:
        raise BadSpecError("the example needs p >= 3")
    rng = _rng(rng)
    x = rng.standard_normal((n, p))
    prob = 1.0 - r ** (1.0 / p)
    mask = np.zeros((n, p), dtype=bool)
    mask[:, 0] = x[:, 1] > threshold
    mask[:, 1:] = rng.random((n, p - 1)) < prob
    mask = _redraw_full_rows(mask, prob, rng, cols=np.arange(1, p))
    x[mask] = np.nan
    return DataMatrix.from_array(x)
