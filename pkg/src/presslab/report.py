"""CSV report tables with a versioned, stable column layout."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import SchemaError

SCHEMA_VERSION = 1
_MAGIC = "# presslab-csv"


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return str(v.numerator)
        v = float(v)
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


@dataclass
class ReportTable:
    kind: str
    columns: list
    rows: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def add(self, row: dict) -> None:
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise SchemaError(f"row lacks columns {missing}")
        self.rows.append(row)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"{_MAGIC} v{self.schema_version} kind={self.kind}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([format_value(r[c]) for c in self.columns])
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path

    def column(self, name: str) -> list:
        if name not in self.columns:
            raise SchemaError(f"no column {name!r}; have {', '.join(self.columns)}")
        return [r[name] for r in self.rows]

    @classmethod
    def from_csv(cls, text: str) -> "ReportTable":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(_MAGIC):
            raise SchemaError("not a presslab CSV (missing schema header)")
        head = lines[0].split()
        try:
            version = int(head[2].lstrip("v"))
            kind = head[3].split("=", 1)[1]
        except (IndexError, ValueError):
            raise SchemaError(f"malformed schema header {lines[0]!r}") from None
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema version {version}")
        reader = csv.reader(lines[1:])
        try:
            columns = next(reader)
        except StopIteration:
            raise SchemaError("CSV has no column header") from None
        rows = []
        for rec in reader:
            if len(rec) != len(columns):
                raise SchemaError(f"row has {len(rec)} fields, expected {len(columns)}")
            rows.append(dict(zip(columns, rec)))
        if not rows:
            raise SchemaError("CSV has no data rows")
        return cls(kind, columns, rows, version)

    @classmethod
    def read(cls, path) -> "ReportTable":
        return cls.from_csv(Path(path).read_text())
