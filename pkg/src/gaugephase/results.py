"""Tabular results with lossless CSV and JSON round-trips."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def _parse(s: str):
    if s in ("true", "false"):
        return s == "true"
    for kind in (int, float):
        try:
            return kind(s)
        except ValueError:
            pass
    return s


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self.rows.append([v.item() if isinstance(v, np.generic) else v for v in values])

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows])

    def __len__(self):
        return len(self.rows)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            for c in self.comments:
                fh.write(f"# {c}\n")
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([_fmt(v) for v in r])
        return path

    def write_json(self, path) -> Path:
        path = Path(path)
        records = [dict(zip(self.columns, r)) for r in self.rows]
        payload = {"comments": self.comments, "columns": self.columns, "records": records}
        path.write_text(json.dumps(payload, indent=1))
        return path

    def write(self, stem, formats=("csv",)) -> list[Path]:
        out = []
        for fmt in formats:
            if fmt == "csv":
                out.append(self.write_csv(f"{stem}.csv"))
            elif fmt == "json":
                out.append(self.write_json(f"{stem}.json"))
            else:
                raise ValueError(f"unknown output format {fmt!r}")
        return out

    @classmethod
    def read_csv(cls, path) -> "ResultTable":
        comments, lines = [], []
        for line in Path(path).read_text().splitlines():
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif line:
                lines.append(line)
        reader = csv.reader(lines)
        columns = next(reader)
        return cls(columns, [[_parse(v) for v in r] for r in reader], comments)

    @classmethod
    def read_json(cls, path) -> "ResultTable":
        payload = json.loads(Path(path).read_text())
        cols = payload["columns"]
        return cls(cols, [[rec[c] for c in cols] for rec in payload["records"]], payload.get("comments", []))
