"""Monte Carlo harness for rejection rates (power and type-I error)."""

from __future__ import annotations

import csv
import multiprocessing
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .permtest import TestConfig, pklm_test
from .synth import SimSpec, partial_example, simulate, yuan_example

TABLE_FIELDS = ("n", "p", "r", "case", "power", "type_I_error")


@dataclass(frozen=True)
class Cell:
    case: int
    n: int
    p: int
    r: float
    mechanism: str

    @property
    def key(self) -> str:
        return f"{self.case}|{self.n}|{self.p}|{self.r!r}|{self.mechanism}"


def replicate_seeds(base_seed: int, label: str, rep: int):
    """Independent (data seed, test seed) for one replicate of one cell."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(zlib.crc32(label.encode()), rep))
    data_seed, test_seed = ss.generate_state(2, dtype=np.uint64)
    return int(data_seed), int(test_seed)


def _cell_data(cell: Cell, data_seed: int):
    return simulate(SimSpec(cell.case, cell.n, cell.p, cell.r, cell.mechanism), np.random.default_rng(data_seed))


def _one(args):
    generate, label, rep, base_seed, config = args
    data_seed, test_seed = replicate_seeds(base_seed, label, rep)
    data = generate(data_seed)
    return pklm_test(data, replace(config, seed=test_seed)).p_value


class _CellGenerator:
    # picklable for process pools
    def __init__(self, cell):
        self.cell = cell

    def __call__(self, data_seed):
        return _cell_data(self.cell, data_seed)


class _YuanGenerator:
    def __init__(self, n):
        self.n = n

    def __call__(self, data_seed):
        return yuan_example(self.n, np.random.default_rng(data_seed))


def _init_worker():
    from .forest import set_num_threads

    set_num_threads(1)


def run_replicates(generate: Callable, label: str, reps: int, base_seed: int,
                   config: TestConfig = TestConfig(), jobs: int = 1) -> np.ndarray:
    """P-values of ``reps`` independent simulate-then-test rounds.

    ``generate(data_seed)`` must return a dataset. The result does not depend
    on ``jobs``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    tasks = [(generate, label, rep, base_seed, config) for rep in range(reps)]
    if jobs <= 1:
        return np.array([_one(t) for t in tasks])
    # spawn: forking after the OpenMP runtime has started is unsafe
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx, initializer=_init_worker) as pool:
        return np.array(list(pool.map(_one, tasks, chunksize=max(1, reps // (4 * jobs)))))


def run_cell(cell: Cell, reps: int, base_seed: int, config: TestConfig = TestConfig(),
             jobs: int = 1) -> np.ndarray:
    return run_replicates(_CellGenerator(cell), cell.key, reps, base_seed, config, jobs)


def run_yuan(n: int, reps: int, base_seed: int, config: TestConfig = TestConfig(),
             jobs: int = 1) -> np.ndarray:
    return run_replicates(_YuanGenerator(n), f"yuan|{n}", reps, base_seed, config, jobs)


def run_partial(n: int, p: int, reps: int, base_seed: int, config: TestConfig = TestConfig()):
    """Partial p-values (``reps x p``) for the first-column-driven example."""
    config = replace(config, compute_partial=True)
    out = np.full((reps, p), np.nan)
    for rep in range(reps):
        data_seed, test_seed = replicate_seeds(base_seed, f"partial|{n}|{p}", rep)
        data = partial_example(n, p, rng=np.random.default_rng(data_seed))
        report = pklm_test(data, replace(config, seed=test_seed))
        for k, v in report.partial_p_values.items():
            out[rep, k] = np.nan if v is None else v
    return out


def expand_grid(cases, ns, ps, rs, mechanisms):
    """Cells of the grid; ``ns`` and ``ps`` pair up elementwise (a single
    value broadcasts)."""
    ns, ps = list(ns), list(ps)
    if len(ns) == 1 and len(ps) > 1:
        ns = ns * len(ps)
    if len(ps) == 1 and len(ns) > 1:
        ps = ps * len(ns)
    if len(ns) != len(ps):
        raise ValueError("--n and --p must have equal length or length one")
    if not cases or not rs or not mechanisms or not ns:
        raise ValueError("empty grid")
    return [Cell(case, n, p, r, mech)
            for n, p in zip(ns, ps) for r in rs for case in cases for mech in mechanisms]


def run_grid(cells, reps: int, alpha: float, base_seed: int, config: TestConfig = TestConfig(),
             jobs: int = 1, progress: Optional[Callable] = None):
    """Rejection rates per cell; returns ``(table_rows, pvalue_rows)``."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    rates, pvals = {}, []
    for cell in cells:
        ps = run_cell(cell, reps, base_seed, config, jobs)
        rates[cell] = float(np.mean(ps <= alpha))
        pvals.extend(
            {"n": cell.n, "p": cell.p, "r": cell.r, "case": cell.case,
             "mechanism": cell.mechanism, "rep": i, "p_value": float(v)}
            for i, v in enumerate(ps)
        )
        if progress is not None:
            progress(cell, rates[cell])
    table, seen = [], []
    for cell in cells:
        row_key = (cell.n, cell.p, cell.r, cell.case)
        if row_key in seen:
            continue
        seen.append(row_key)
        power = rates.get(Cell(cell.case, cell.n, cell.p, cell.r, "mar"))
        level = rates.get(Cell(cell.case, cell.n, cell.p, cell.r, "mcar"))
        table.append({"n": cell.n, "p": cell.p, "r": cell.r, "case": cell.case,
                      "power": power, "type_I_error": level})
    return table, pvals


def write_rows(rows, path_or_file, fields):
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in fields})
    finally:
        if own:
            fh.close()
