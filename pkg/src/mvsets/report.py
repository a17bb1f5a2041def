"""Rectangular result tables and their CSV form.

The CSV layout is: ``#``-prefixed metadata lines (including the column
types), a header row, then one line per row.  Reals use 17 significant
digits so that every value parses back to the same double; booleans are
written ``true``/``false``.  Lines end in ``\\n``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

TYPES = ("real", "int", "bool", "str")


def _infer(values):
    kinds = set()
    for v in values:
        if isinstance(v, bool):
            kinds.add("bool")
        elif isinstance(v, int):
            kinds.add("int")
        elif isinstance(v, float):
            kinds.add("real")
        elif isinstance(v, str):
            kinds.add("str")
        else:
            raise TypeError(f"unsupported cell type {type(v).__name__}")
    if not kinds:
        return "real"
    if kinds == {"int", "real"}:
        return "real"
    if len(kinds) > 1:
        raise TypeError(f"mixed column types {sorted(kinds)}")
    return kinds.pop()


def _coerce(v, kind):
    if kind == "real":
        return float(v)
    if kind == "int":
        return int(v)
    if kind == "bool":
        return bool(v)
    return str(v)


@dataclass(frozen=True)
class ReportTable:
    """Named columns, one row per record, and ordered metadata pairs.

    Cells are normalized to Python scalars of the column type at
    construction, so tables built from numpy values compare equal to their
    parsed CSV.
    """

    name: str
    columns: tuple
    rows: tuple
    metadata: tuple = ()
    types: tuple = field(default=None)

    def __post_init__(self):
        cols = tuple(str(c) for c in self.columns)
        if len(set(cols)) != len(cols):
            raise ValueError(f"duplicate column names in {self.name}")
        rows = tuple(tuple(_scalar(v) for v in r) for r in self.rows)
        for r in rows:
            if len(r) != len(cols):
                raise ValueError(f"row of length {len(r)} in a table with {len(cols)} columns")
        types = self.types
        if types is None:
            types = tuple(_infer([r[k] for r in rows]) for k in range(len(cols)))
        types = tuple(types)
        if any(t not in TYPES for t in types) or len(types) != len(cols):
            raise ValueError(f"bad column types {types}")
        rows = tuple(tuple(_coerce(v, t) for v, t in zip(r, types)) for r in rows)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "metadata", tuple((str(k), str(v)) for k, v in self.metadata))

    @classmethod
    def from_records(cls, name, records, metadata=()):
        records = list(records)
        if not records:
            return cls(name, (), (), metadata)
        cols = tuple(records[0])
        return cls(name, cols, tuple(tuple(r[c] for c in cols) for r in records), metadata)

    def column(self, name):
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def __len__(self):
        return len(self.rows)


def _scalar(v):
    if hasattr(v, "item") and not isinstance(v, (str, bytes)):
        v = v.item()
    return v


def _cell(v, kind):
    if kind == "real":
        return format(v, ".17g")
    if kind == "bool":
        return "true" if v else "false"
    return str(v)


def _parse_cell(text, kind):
    if kind == "real":
        return float(text)
    if kind == "int":
        return int(text)
    if kind == "bool":
        if text not in ("true", "false"):
            raise ValueError(f"bad boolean {text!r}")
        return text == "true"
    return text


def format_csv(table):
    out = io.StringIO()
    out.write(f"# table: {table.name}\n")
    for k, v in table.metadata:
        out.write(f"# {k}: {v}\n")
    out.write("# types: " + ",".join(table.types) + "\n")
    w = csv.writer(out, lineterminator="\n")
    # with a \n terminator the writer leaves a bare \r unquoted
    wq = csv.writer(out, lineterminator="\n", quoting=csv.QUOTE_ALL)
    for r in (table.columns, *([_cell(v, t) for v, t in zip(r, table.types)] for r in table.rows)):
        (wq if any("\r" in c for c in r) else w).writerow(r)
    return out.getvalue()


def write_report_csv(table, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(table))


def parse_csv(text):
    """Inverse of :func:`format_csv`."""
    meta, name, types = [], "", None
    pos = 0
    while text.startswith("# ", pos):
        end = text.find("\n", pos)
        end = len(text) if end < 0 else end
        key, _, value = text[pos + 2:end].partition(": ")
        if key == "table" and not name:
            name = value
        elif key == "types":
            types = tuple(value.split(",")) if value else ()
        else:
            meta.append((key, value))
        pos = end + 1
    # quoted cells may hold newlines, so the body goes to the reader whole
    rows = [r for r in csv.reader(io.StringIO(text[pos:], newline="")) if r]
    if not rows:
        return ReportTable(name, (), (), tuple(meta), types=types or ())
    header, data = rows[0], rows[1:]
    if types is None:
        types = ("str",) * len(header)
    parsed = tuple(tuple(_parse_cell(c, t) for c, t in zip(r, types)) for r in data)
    return ReportTable(name, tuple(header), parsed, tuple(meta), types=types)


def read_report_csv(path):
    with open(path, encoding="utf-8") as fh:
        return parse_csv(fh.read())


def tables_equal(a, b):
    """Equality that treats NaN cells as equal to each other."""
    if (a.name, a.columns, a.types, a.metadata) != (b.name, b.columns, b.types, b.metadata):
        return False
    if len(a.rows) != len(b.rows):
        return False
    for ra, rb in zip(a.rows, b.rows):
        for x, y in zip(ra, rb):
            if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
                continue
            if x != y:
                return False
    return True
