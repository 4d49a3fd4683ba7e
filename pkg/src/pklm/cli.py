"""Command-line entry point: ``pklm test | simulate | bench``.

Exit status is 0 on success (whatever the verdict) and 2 on usage, I/O or
data errors. ``PKLM_NUM_THREADS`` sets the kernel thread count.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
import warnings

import numpy as np

from . import bench as bench_mod
from .data import CsvOptions, drop_all_missing_rows, load_csv, write_csv
from .errors import NoMissingnessWarning, PKLMError
from .forest import set_num_threads
from .permtest import NO_MISSINGNESS, TestConfig, pklm_test
from .report import dumps, to_document
from .synth import SimSpec, partial_example, simulate, yuan_example

EXIT_OK = 0
EXIT_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _str_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_test_options(p):
    g = p.add_argument_group("test configuration")
    g.add_argument("--num-proj", type=int, default=100, help="number of projections (default 100)")
    g.add_argument("--nrep", type=int, default=30, help="row permutations (default 30)")
    g.add_argument("--num-trees", type=int, default=200, help="trees per forest (default 200)")
    g.add_argument("--min-node-size", type=int, default=10, help="default 10")
    g.add_argument("--size-resp-set", type=int, default=2, help="max classes per projection (default 2)")
    g.add_argument("--class-rule", choices=("select", "merge"), default="select",
                   help="shrink B to respect --size-resp-set (select) or merge rare patterns (merge)")


def _test_config(args, seed, partial=False):
    return TestConfig(
        num_proj=args.num_proj,
        nrep=args.nrep,
        num_trees_per_proj=args.num_trees,
        min_node_size=args.min_node_size,
        size_resp_set=args.size_resp_set,
        class_rule=args.class_rule,
        seed=seed,
        compute_partial=partial,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pklm", description="MCAR test based on projected log-odds of forest class probabilities.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="test a CSV file for MCAR")
    t.add_argument("input", help="CSV file")
    _add_test_options(t)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--partial", action="store_true", help="also compute per-variable partial p-values")
    t.add_argument("--alpha", type=float, default=0.05, help="level for the verdict line only (default 0.05)")
    t.add_argument("--out", help="write the JSON report here (default: stdout)")
    t.add_argument("--delimiter", default=",")
    t.add_argument("--no-header", action="store_true", help="the first line is data")
    t.add_argument("--na", action="append", metavar="TOKEN",
                   help="missing-value token (repeatable; default: empty and NA)")
    t.add_argument("--drop-all-missing", action="store_true",
                   help="drop rows with no observed value instead of failing")
    t.add_argument("--record-time", action="store_true",
                   help="store wall time in the report (breaks byte-identical output)")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="write a synthetic dataset as CSV")
    s.add_argument("--case", type=int, default=1, help="distribution case 1..8")
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--p", type=int, default=4)
    s.add_argument("--r", type=float, default=0.65, help="expected fraction of complete rows")
    s.add_argument("--mechanism", default="mcar", help="mcar, mar or none")
    s.add_argument("--preset", choices=("yuan", "partial"),
                   help="banded two-variable example, or first-column-driven partial example")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="Monte Carlo power and type-I error")
    b.add_argument("--cases", type=_int_list, default=[1])
    b.add_argument("--n", type=_int_list, default=[200], help="sample sizes, paired with --p")
    b.add_argument("--p", type=_int_list, default=[4], help="dimensions, paired with --n")
    b.add_argument("--r", type=_float_list, default=[0.65])
    b.add_argument("--mechanisms", type=_str_list, default=["mcar", "mar"])
    b.add_argument("--reps", type=int, default=300)
    b.add_argument("--alpha", type=float, default=0.05)
    b.add_argument("--seed", type=int, default=0)
    _add_test_options(b)
    b.add_argument("--jobs", type=int, default=1, help="worker processes")
    b.add_argument("--out", help="table CSV path (default: stdout)")
    b.add_argument("--pvalues-out", help="also write every replicate p-value (ECDF data)")
    b.set_defaults(func=cmd_bench)
    return parser


def _verdict(p, alpha, trivial):
    if trivial:
        return "no missingness: single pattern, p-value 1"
    if p <= alpha:
        return f"REJECT MCAR (p-value {p:.6g} <= alpha {alpha:g})"
    return f"MCAR not rejected (p-value {p:.6g} > alpha {alpha:g})"


def cmd_test(args) -> int:
    tokens = tuple(args.na) if args.na else ("", "NA")
    data = load_csv(args.input, CsvOptions(delimiter=args.delimiter, header=not args.no_header,
                                          missing_tokens=tokens))
    if args.drop_all_missing:
        data, dropped = drop_all_missing_rows(data)
        if dropped.size:
            print(f"warning: dropped {dropped.size} all-missing rows", file=sys.stderr)
    seed = args.seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy)
    config = _test_config(args, seed, args.partial)
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoMissingnessWarning)
        report = pklm_test(data, config)
    elapsed = time.perf_counter() - start
    doc = to_document(report, data.columns, elapsed if args.record_time else None)
    text = dumps(doc)
    line = _verdict(report.p_value, args.alpha, NO_MISSINGNESS in report.warnings)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(line)
    else:
        sys.stdout.write(text)
        print(line, file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.preset == "yuan":
        if args.n < 1:
            raise PKLMError("n must be >= 1")
        data = yuan_example(args.n, rng)
    elif args.preset == "partial":
        data = partial_example(args.n, args.p, args.r, rng=rng)
    else:
        data = simulate(SimSpec(args.case, args.n, args.p, args.r, args.mechanism), rng)
    write_csv(data, args.out if args.out else sys.stdout)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.reps < 1:
        raise PKLMError("invalid grid: reps must be >= 1")
    for mech in args.mechanisms:
        if mech not in ("mcar", "mar"):
            raise PKLMError(f"invalid grid: unknown mechanism {mech!r}")
    try:
        cells = bench_mod.expand_grid(args.cases, args.n, args.p, args.r, args.mechanisms)
        for cell in cells:
            SimSpec(cell.case, cell.n, cell.p, cell.r, cell.mechanism)
    except ValueError as exc:
        raise PKLMError(f"invalid grid: {exc}") from exc
    config = _test_config(args, None)

    def progress(cell, rate):
        print(f"case {cell.case} n={cell.n} p={cell.p} r={cell.r} {cell.mechanism}: "
              f"rejection rate {rate:.3f}", file=sys.stderr)

    table, pvals = bench_mod.run_grid(cells, args.reps, args.alpha, args.seed, config,
                                      jobs=args.jobs, progress=progress)
    bench_mod.write_rows(table, args.out if args.out else sys.stdout, bench_mod.TABLE_FIELDS)
    if args.pvalues_out:
        bench_mod.write_rows(pvals, args.pvalues_out,
                             ("n", "p", "r", "case", "mechanism", "rep", "p_value"))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = os.environ.get("PKLM_NUM_THREADS")
    try:
        if threads:
            set_num_threads(int(threads))
        return args.func(args)
    except (PKLMError, OSError, ValueError) as exc:
        print(f"pklm: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
