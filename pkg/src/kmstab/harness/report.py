"""Report files: one main CSV/JSON per run plus plot-ready side CSVs for curves.

JSON layout (``schema_version`` 1)::

    {"schema_version": 1, "command": str, "params": {...}, "status": "pass|fail|skipped",
     "verdicts": [{"check", "status", "reason", "witness", "margins"}],
     "measurements": {...},
     "tables": [{"name", "columns", "rows"}]}

Non-finite floats are written as the strings "inf", "-inf" and "nan" so the
output stays strict JSON. Nothing time- or host-dependent is recorded, so a
rerun with the same flags gives byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .suites import Verdict, summarize

SCHEMA_VERSION = 1
FORMATS = ("csv", "json")
MAIN_COLUMNS = ("check", "status", "reason", "margins", "witness")
MEASURED = "measured"


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)


@dataclass
class Report:
    command: str
    params: dict = field(default_factory=dict)
    verdicts: list[Verdict] = field(default_factory=list)
    measurements: dict = field(default_factory=dict)
    tables: list[Table] = field(default_factory=list)

    @property
    def status(self) -> str:
        return summarize(self.verdicts)

    def as_dict(self) -> dict:
        return clean(
            {
                "schema_version": SCHEMA_VERSION,
                "command": self.command,
                "params": self.params,
                "status": self.status,
                "verdicts": [
                    {"check": v.check, "status": v.status, "reason": v.reason, "witness": v.witness, "margins": v.margins}
                    for v in self.verdicts
                ],
                "measurements": self.measurements,
                "tables": [{"name": t.name, "columns": list(t.columns), "rows": t.rows} for t in self.tables],
            }
        )


def report_from_dict(data: dict) -> Report:
    """Inverse of ``Report.as_dict`` (up to the non-finite float encoding)."""
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema_version {data.get('schema_version')!r}")
    verdicts = [Verdict(v["check"], v["status"], v["reason"], v["witness"], v["margins"]) for v in data["verdicts"]]
    tables = [Table(t["name"], list(t["columns"]), [list(r) for r in t["rows"]]) for t in data["tables"]]
    return Report(data["command"], data["params"], verdicts, data["measurements"], tables)


def clean(obj):
    """Recursively turn numpy scalars/arrays, tuples and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, separators=(",", ":"))


def _cell(v) -> str:
    v = clean(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return _dumps(v)
    return "" if v is None else str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def main_rows(report: Report) -> list[list]:
    rows = [[v.check, v.status, v.reason, v.margins, v.witness] for v in report.verdicts]
    for name, value in report.measurements.items():
        rows.append([name, MEASURED, "", {"value": value}, {}])
    return rows


def side_path(path: Path, table: Table) -> Path:
    return path.with_name(f"{path.stem}.{table.name}.csv")


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc.strerror or exc}") from exc


def format_report(report: Report, fmt: str = "csv") -> str:
    """Text of the main report file (tables excluded from CSV, included in JSON)."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    if fmt == "json":
        return json.dumps(report.as_dict(), indent=2) + "\n"
    return _csv_text(MAIN_COLUMNS, main_rows(report))


def emit_report(report: Report, path, fmt: str = "csv") -> list[Path]:
    """Write the main report at ``path`` and one ``<stem>.<table>.csv`` per table.

    Returns every path written. An empty report still yields a valid file
    (CSV header only, or a JSON document with empty lists).
    """
    path = Path(path)
    _write(path, format_report(report, fmt))
    written = [path]
    for table in report.tables:
        side = side_path(path, table)
        _write(side, _csv_text(table.columns, table.rows))
        written.append(side)
    return written


def render_text(report: Report) -> str:
    """Human summary printed by the CLI; same content as the CSV, one line per row."""
    lines = [f"{report.command}: {report.status}"]
    for v in report.verdicts:
        tail = f" ({v.reason})" if v.reason else ""
        lines.append(f"  {v.status.upper():7s} {v.check}{tail}")
    for name, value in report.measurements.items():
        lines.append(f"  {name} = {_cell(value)}")
    for t in report.tables:
        lines.append(f"  table {t.name}: {len(t.rows)} rows [{', '.join(t.columns)}]")
    return "\n".join(lines)


def read_report(path, fmt: str | None = None):
    """Load a report written by ``emit_report``.

    JSON gives the structured dict; CSV gives a list of row dicts with the
    ``margins`` and ``witness`` columns decoded.
    """
    path = Path(path)
    fmt = fmt or ("json" if path.suffix.lower() == ".json" else "csv")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read report {path}: {exc.strerror or exc}") from exc
    if fmt == "json":
        return json.loads(text)
    rows = list(csv.DictReader(io.StringIO(text)))
    for row in rows:
        for key in ("margins", "witness"):
            row[key] = json.loads(row[key]) if row[key] else {}
    return rows
