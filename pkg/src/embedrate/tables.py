"""Plain CSV tables keyed by an ``id`` column."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .nn import format_float

__all__ = ["Table", "read_table", "write_table"]


@dataclass
class Table:
    ids: list
    columns: list
    values: np.ndarray  # n x len(columns)

    def column(self, name) -> np.ndarray:
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"no column {name!r}; have {self.columns}") from None

    def select(self, names) -> np.ndarray:
        return np.column_stack([self.column(n) for n in names]) if names else np.zeros((len(self.ids), 0))


def read_table(path) -> Table:
    """Read a CSV whose header starts with ``id``; other columns are numeric."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "id":
        raise ParseError("table header must start with 'id'", 1)
    header = rows[0]
    ids, values = [], []
    for no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", no)
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ParseError(str(exc), no) from None
        ids.append(row[0])
    arr = np.array(values, dtype=np.float64).reshape(len(ids), len(header) - 1)
    return Table(ids, header[1:], arr)


def write_table(path, ids, columns, values) -> None:
    values = np.asarray(values, dtype=np.float64).reshape(len(ids), len(columns))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", *columns])
        for key, row in zip(ids, values):
            writer.writerow([key, *(format_float(v) for v in row)])
