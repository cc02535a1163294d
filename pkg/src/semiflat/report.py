"""Bit-stable report serialization: JSON with 17-digit floats and a CSV node table."""

from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from .pipeline import CorrespondenceReport, NodeTable, empty_table

REPORT_FIELDS = ("config", "m", "k", "tolerance", "verdict", "atlas", "section", "patch", "row1", "row2", "row3", "solver")


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def to_plain(obj: Any) -> Any:
    """Convert dataclasses, arrays and numpy scalars to JSON-compatible builtins."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dump(obj: Any, indent: int, level: int, out: list[str]) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(k)}: ")
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(not isinstance(v, (dict, list)) for v in obj):
            out.append("[" + ", ".join(_scalar(v) for v in obj) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        out.append(_scalar(obj))


def _scalar(v: Any) -> str:
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return json.dumps(v)
    return fmt_float(float(v))


def dumps(obj: Any, indent: int = 2) -> str:
    out: list[str] = []
    _dump(to_plain(obj), indent, 0, out)
    return "".join(out) + "\n"


def report_dict(report: CorrespondenceReport) -> dict:
    """Fixed field order; the node table is stored column-wise."""
    d = {name: getattr(report, name) for name in REPORT_FIELDS}
    d["disagreements"] = report.disagreements
    table = report.table
    if table is not None:
        d["table"] = {"header": table.header(), "rows": table.rows()}
    else:
        d["table"] = None
    return to_plain(d)


def to_json(report: CorrespondenceReport) -> str:
    return dumps(report_dict(report))


def to_csv(report: CorrespondenceReport) -> str:
    table = report.table if report.table is not None else empty_table(report.k)
    return table_csv(table)


def table_csv(table: NodeTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header())
    for row in table.rows():
        w.writerow([fmt_float(float(v)) for v in row])
    return buf.getvalue()


def emit_report(report: CorrespondenceReport, format: str = "json", path: str | Path | None = None) -> str:
    """Serialize ``report``; write it to ``path`` when given and return the text."""
    if format == "json":
        text = to_json(report)
    elif format == "csv":
        text = to_csv(report)
    else:
        raise ValueError(f"unknown format {format!r}; expected json or csv")
    if path is not None:
        Path(path).write_text(text)
    return text


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
