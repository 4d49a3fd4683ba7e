"""Versioned JSON documents for test reports."""

from __future__ import annotations

import json
import math
from dataclasses import asdict
from typing import Optional, Sequence

from .errors import PKLMError
from .permtest import NO_MISSINGNESS, TestReport, p_value

SCHEMA_VERSION = "pklm-report/1"


class ReportMismatchError(PKLMError):
    pass


def to_document(report: TestReport, columns: Optional[Sequence[str]] = None,
                wall_time: Optional[float] = None) -> dict:
    """Serialise ``report``; column indices in ``projections`` are 0-based."""
    columns = list(columns) if columns is not None else [f"V{j + 1}" for j in range(report.n_cols)]
    config = asdict(report.config) if report.config is not None else {}
    config["seed"] = report.seed
    partial = None
    if report.partial_p_values is not None:
        partial = {columns[k]: v for k, v in sorted(report.partial_p_values.items())}
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "columns": columns,
        "statistic": float(report.statistic),
        "null_statistics": [float(v) for v in report.null_statistics],
        "p_value": float(report.p_value),
        "partial_p_values": partial,
        "warnings": list(report.warnings),
        "retained_projections": report.retained_projections,
        "skipped_projections": report.skipped_projections,
        "projections": [
            {
                "index": rec.index,
                "a_dims": list(rec.a_dims),
                "b_dims": list(rec.b_dims),
                "n_rows": rec.n_rows,
                "n_classes": rec.n_classes,
                "value": rec.value,
            }
            for rec in report.projections
        ],
        "wall_time": wall_time,
    }
    check_document(doc)
    return doc


def check_document(doc: dict) -> None:
    """Recompute the p-value from the embedded statistics and compare."""
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ReportMismatchError(f"unsupported schema {doc.get('schema_version')!r}")
    if NO_MISSINGNESS in doc["warnings"]:
        expected = 1.0
    else:
        expected = p_value(doc["statistic"], doc["null_statistics"])
    if not math.isclose(expected, doc["p_value"], rel_tol=0, abs_tol=1e-15):
        raise ReportMismatchError(f"p-value {doc['p_value']} does not match recomputed {expected}")


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def loads(text: str) -> dict:
    doc = json.loads(text)
    check_document(doc)
    return doc
