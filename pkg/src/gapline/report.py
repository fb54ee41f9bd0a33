"""CSV/JSON emission with fixed 12-significant-digit floats."""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

SOLVE_COLUMNS = ["lambda1", "lambda2", "gap", "x_minus", "x_plus", "x_hat_minus", "x_hat_plus"]
SWEEP_COLUMNS = ["m", "p", "threshold_5mpi", "condition_holds", "final_gap", "variation", "converged"]


def format_float(x: float) -> str:
    return f"{x:.12g}"


def _clean(value):
    """Round floats to 12 significant digits, recursively; numpy scalars to Python."""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return float(format_float(v)) if np.isfinite(v) else None
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_clean(v) for v in value]
    if hasattr(value, "value"):  # enums
        return value.value
    return value


def _csv_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return ";".join(_csv_cell(v) for v in value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def render(rows: list[dict], fmt: str, columns: list[str] | None = None, extra: dict | None = None) -> str:
    if columns is None:
        columns = list(rows[0]) if rows else []
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_cell(row.get(c)) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        doc = {"columns": columns, "rows": [{c: row.get(c) for c in columns} for row in rows]}
        if extra:
            doc.update(extra)
        return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit_report(rows: list[dict], fmt: str = "json", path=None, columns=None, extra=None) -> str:
    """Write ``rows`` to ``path`` (stdout when None) and return the text."""
    text = render(rows, fmt, columns, extra)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc}") from exc
    return text
