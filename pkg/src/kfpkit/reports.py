"""Report emission shared by the CLI and the acceptance suite.

Everything written here is a pure function of the inputs: no timestamps,
sorted JSON keys, fixed float formatting. Two runs with the same config and
seed therefore produce byte-identical files.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import GridField, format_number, write_csv

FORMATS = ("csv", "json")


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become the strings "nan", "inf", "-inf"."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dump_json(doc) -> str:
    return json.dumps(to_jsonable(doc), sort_keys=True, indent=2) + "\n"


@dataclass
class Check:
    """One named assertion of a run."""

    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}" + (f": {self.detail}" if self.detail else "")


def describe(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return str(value)


class ReportWriter:
    """Writes tables, JSON documents and binary fields into one output directory.

    Tables follow ``fmt``: RFC 4180 CSV or a JSON list of records. The run
    summary (checks plus any extra fields) always goes to ``summary.json``.
    """

    def __init__(self, out_dir, fmt: str = "csv"):
        if fmt not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")
        self.out_dir = Path(out_dir)
        self.fmt = fmt
        self.written: list[str] = []

    def _path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written.append(name)
        return self.out_dir / name

    def table(self, stem: str, columns, rows) -> str:
        rows = [list(r) for r in rows]
        if self.fmt == "csv":
            name = stem + ".csv"
            self._path(name).write_bytes(write_csv(columns, rows).encode("utf-8"))
        else:
            name = stem + ".json"
            records = [dict(zip(columns, r)) for r in rows]
            self._path(name).write_text(dump_json(records), encoding="utf-8")
        return name

    def records(self, stem: str, records) -> str:
        """Table from a list of dicts sharing their keys (column order from the first record)."""
        records = list(records)
        columns = list(records[0]) if records else []
        return self.table(stem, columns, [[r[c] for c in columns] for r in records])

    def json(self, name: str, doc) -> str:
        self._path(name).write_text(dump_json(doc), encoding="utf-8")
        return name

    def field(self, name: str, fld: GridField) -> str:
        self._path(name).write_bytes(fld.to_bytes())
        return name

    def text(self, name: str, content: str) -> str:
        self._path(name).write_bytes(content.encode("utf-8"))
        return name

    def summary(self, subcommand: str, checks, extra=None) -> str:
        doc = {"subcommand": subcommand, "checks": [dataclasses.asdict(c) for c in checks],
               "passed": all(c.passed for c in checks), "files": sorted(set(self.written))}
        if extra:
            doc.update(extra)
        return self.json("summary.json", doc)


__all__ = ["FORMATS", "Check", "ReportWriter", "describe", "dump_json", "format_number", "to_jsonable"]
