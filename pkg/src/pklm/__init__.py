"""MCAR testing with projected forest log-odds and a row-permutation null."""

import os as _os

# numba fixes its thread pool size at import; let PKLM_NUM_THREADS widen it
_threads = _os.environ.get("PKLM_NUM_THREADS")
if _threads and _threads.isdigit() and "NUMBA_NUM_THREADS" not in _os.environ:
    _os.environ["NUMBA_NUM_THREADS"] = str(max(int(_threads), _os.cpu_count() or 1))
# prefer OpenMP; the TBB layer is often too old and warns
_os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

from .data import (  # noqa: E402
    CsvOptions,
    DataMatrix,
    MissingnessMask,
    PatternCatalog,
    build_mask,
    extract_patterns,
    load_csv,
    write_csv,
)
from .forest import ForestConfig, FittedForest, OobProbabilities, fit_forest, oob_probabilities  # noqa: E402
from .permtest import TestConfig, TestReport, partial_p_values, pklm_test  # noqa: E402
from .projection import ProjectionPair, collapse_labels, sample_projection_pair  # noqa: E402
from .statistic import projection_statistic  # noqa: E402
from .synth import SimSpec, simulate  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "CsvOptions",
    "DataMatrix",
    "FittedForest",
    "ForestConfig",
    "MissingnessMask",
    "OobProbabilities",
    "PatternCatalog",
    "ProjectionPair",
    "SimSpec",
    "TestConfig",
    "TestReport",
    "build_mask",
    "collapse_labels",
    "extract_patterns",
    "fit_forest",
    "load_csv",
    "oob_probabilities",
    "partial_p_values",
    "pklm_test",
    "projection_statistic",
    "sample_projection_pair",
    "simulate",
    "write_csv",
]
