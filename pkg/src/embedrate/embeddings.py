"""The embedding table and its shared text file format.

File layout::

    <count> <dimension>
    <id> <v1> ... <vl>
    ...

Values are written with 17 significant digits so that a write/read cycle
reproduces every float64 exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError, ShapeError
from .nn import format_float

__all__ = ["EmbeddingTable", "read_embeddings", "write_embeddings"]


class EmbeddingTable:
    """Ordered map from string ids to vectors of a fixed dimension."""

    def __init__(self, ids, vectors, dim=None):
        ids = [str(i) for i in ids]
        vectors = np.asarray(vectors, dtype=np.float64)
        if dim is None:
            if vectors.ndim != 2:
                raise ShapeError("dimension must be given for an empty table")
            dim = vectors.shape[1]
        dim = int(dim)
        if dim < 1:
            raise ValueError("embedding dimension must be positive")
        if vectors.size == 0:
            vectors = vectors.reshape(0, dim)
        if vectors.ndim != 2 or vectors.shape != (len(ids), dim):
            raise ShapeError(f"vectors of shape {vectors.shape} do not match {len(ids)} ids "
                             f"of dimension {dim}")
        index = {}
        for pos, key in enumerate(ids):
            if not key or any(ch.isspace() for ch in key):
                raise ValueError(f"invalid id {key!r}: ids must be non-empty without whitespace")
            if key in index:
                raise ValueError(f"duplicate id {key!r}")
            index[key] = pos
        self.ids = ids
        self.vectors = vectors
        self.dim = dim
        self._index = index

    def __len__(self):
        return len(self.ids)

    def __contains__(self, key):
        return str(key) in self._index

    def __getitem__(self, key):
        try:
            return self.vectors[self._index[str(key)]]
        except KeyError:
            raise KeyError(f"unknown id {key!r}") from None

    def index(self, key) -> int:
        return self._index[str(key)]

    def subset(self, ids):
        return EmbeddingTable(ids, np.array([self[i] for i in ids]).reshape(-1, self.dim), self.dim)

    def __eq__(self, other):
        return (isinstance(other, EmbeddingTable) and self.dim == other.dim
                and self.ids == other.ids and np.array_equal(self.vectors, other.vectors))

    def __repr__(self):
        return f"EmbeddingTable(count={len(self)}, dim={self.dim})"


def write_embeddings(table: EmbeddingTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for key, row in zip(table.ids, table.vectors):
            fh.write(key + " " + " ".join(format_float(v) for v in row) + "\n")


def read_embeddings(path) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty embedding file", 1)
    header = lines[0].split()
    try:
        count, dim = int(header[0]), int(header[1])
        if len(header) != 2 or count < 0 or dim < 1:
            raise ValueError
    except (ValueError, IndexError):
        raise ParseError(f"bad header {lines[0]!r}, expected '<count> <dimension>'", 1) from None
    body = [(no, line) for no, line in enumerate(lines[1:], start=2) if line.strip()]
    if len(body) != count:
        raise ParseError(f"header announces {count} rows, found {len(body)}", 1)
    ids, rows = [], []
    for no, line in body:
        fields = line.split()
        if len(fields) != dim + 1:
            raise ParseError(f"expected an id and {dim} values, got {len(fields) - 1} values", no)
        try:
            rows.append([float(v) for v in fields[1:]])
        except ValueError as exc:
            raise ParseError(str(exc), no) from None
        ids.append(fields[0])
    try:
        return EmbeddingTable(ids, np.array(rows).reshape(count, dim), dim)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
