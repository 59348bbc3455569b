"""Record CSV and JSON persistence with round-trip-exact number formatting."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from ..diagnostics import RECORD_COLUMNS, DiagnosticsRecord


class SchemaError(ValueError):
    """A records file does not follow the fixed diagnostics schema."""


def _format(value: float) -> str:
    # repr gives the shortest decimal that parses back to the same double
    return repr(float(value))


def write_records(path: str | Path, records) -> Path:
    """Write records as CSV with the fixed column order; empty input gives a header-only file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for rec in records:
            writer.writerow([_format(v) for v in rec.as_row()])
    return path


def read_records(path: str | Path) -> list[DiagnosticsRecord]:
    """Read a CSV written by write_records.

    Raises:
        SchemaError: missing or foreign columns, short rows, unparsable values.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {','.join(RECORD_COLUMNS)}") from None
        foreign = [c for c in header if c not in RECORD_COLUMNS]
        if foreign:
            raise SchemaError(f"{path}: unexpected column {foreign[0]!r}")
        missing = [c for c in RECORD_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column {missing[0]!r}")
        if tuple(header) != RECORD_COLUMNS:
            raise SchemaError(f"{path}: columns out of order, expected {','.join(RECORD_COLUMNS)}")
        records = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(RECORD_COLUMNS):
                raise SchemaError(f"{path}:{line}: expected {len(RECORD_COLUMNS)} fields, got {len(row)} (truncated?)")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise SchemaError(f"{path}:{line}: {exc}") from None
            records.append(DiagnosticsRecord(*values))
    return records


def _clean(obj):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps_json(data) -> str:
    return json.dumps(_clean(data), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: str | Path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(data))
    return path
