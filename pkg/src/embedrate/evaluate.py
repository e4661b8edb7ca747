"""Intrinsic (cosine neighbours) and extrinsic (holdout deviance) evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingTable
from .errors import DomainError, EmbedrateError, ShapeError
from .glm import GlmFamily, assemble_features, deviance, glm_fit
from .nn import format_float
from .tensor import SeededRng

__all__ = [
    "cosine",
    "IntrinsicReport",
    "ExtrinsicReport",
    "nearest_neighbors",
    "extrinsic_compare",
    "ModelFitError",
]


def cosine(u, v) -> float:
    """``u.v / (|u| |v|)``. Larger means closer; 1 for parallel vectors.

    Raises :class:`DomainError` when either vector has zero norm.
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.size != v.size:
        raise ShapeError(f"cosine of vectors with lengths {u.size} and {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DomainError("cosine is undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _render(pairs, machine):
    if machine:
        return "\n".join(f"{k}:{v}" for k, v in pairs) + "\n"
    width = max(len(k) for k, _ in pairs)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in pairs) + "\n"


@dataclass(frozen=True)
class IntrinsicReport:
    query: str
    neighbors: list  # of (id, cosine), descending

    def to_text(self, machine=False) -> str:
        pairs = [("query", self.query), ("k", str(len(self.neighbors)))]
        for rank, (key, value) in enumerate(self.neighbors, start=1):
            pairs.append((f"neighbor.{rank}", f"{key} {format_float(value)}"))
        return _render(pairs, machine)


@dataclass(frozen=True)
class ExtrinsicReport:
    baseline_deviance: float
    augmented_deviance: float
    folds: list = field(default_factory=list)  # of (baseline, augmented)

    @property
    def delta(self) -> float:
        return self.baseline_deviance - self.augmented_deviance

    def to_text(self, machine=False) -> str:
        pairs = [
            ("baseline_deviance", format_float(self.baseline_deviance)),
            ("augmented_deviance", format_float(self.augmented_deviance)),
            ("delta", format_float(self.delta)),
            ("folds", str(len(self.folds))),
        ]
        for i, (b, a) in enumerate(self.folds):
            pairs.append((f"fold.{i}.baseline", format_float(b)))
            pairs.append((f"fold.{i}.augmented", format_float(a)))
        return _render(pairs, machine)


def nearest_neighbors(table: EmbeddingTable, query_id, k: int) -> IntrinsicReport:
    """The ``k`` ids with the largest cosine to ``query_id`` (itself excluded).

    Ties are broken by position in the table.
    """
    query_id = str(query_id)
    if query_id not in table:
        raise KeyError(f"unknown id {query_id!r}")
    if not 1 <= k < len(table):
        raise ValueError(f"k must be in 1..{len(table) - 1}, got {k}")
    norms = np.linalg.norm(table.vectors, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DomainError(f"zero embedding vector for id {table.ids[zero[0]]!r}")
    q = table.index(query_id)
    sims = np.clip(table.vectors @ table.vectors[q] / (norms * norms[q]), -1.0, 1.0)
    others = np.array([i for i in range(len(table)) if i != q])
    # stable sort on -sim keeps table order among ties
    order = others[np.argsort(-sims[others], kind="stable")][:k]
    return IntrinsicReport(query_id, [(table.ids[i], float(sims[i])) for i in order])


class ModelFitError(EmbedrateError):
    """A GLM fit inside an extrinsic comparison failed; ``which`` names the model."""

    def __init__(self, which, cause):
        super().__init__(f"{which} model failed: {cause}")
        self.which = which
        self.cause = cause


def _fit_and_score(which, blocks, y, family, train, test):
    design = assemble_features(blocks, n_rows=y.size)
    try:
        model = glm_fit(design.rows(train), y[train], family)
    except (EmbedrateError, ValueError, np.linalg.LinAlgError) as exc:
        raise ModelFitError(which, exc) from exc
    return deviance(model, design.rows(test), y[test])


def extrinsic_compare(base_blocks, augmented_blocks, y, family: GlmFamily,
                      train_fraction: float = 0.7, seed: int = 0, folds: int = 0) -> ExtrinsicReport:
    """Holdout deviance of a baseline GLM versus an augmented GLM.

    Both models see the same seeded split. With ``folds >= 2`` a k-fold
    scheme is used instead and deviances are summed over folds.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = y.size
    for name, block in list(base_blocks) + list(augmented_blocks):
        if np.asarray(block).shape[0] != n:
            raise ShapeError(f"block {name!r} has {np.asarray(block).shape[0]} rows, expected {n}")
    order = SeededRng(seed).permutation(n)
    if folds and folds >= 2:
        splits = []
        for part in np.array_split(order, folds):
            mask = np.zeros(n, dtype=bool)
            mask[part] = True
            splits.append((np.flatnonzero(~mask), np.flatnonzero(mask)))
    else:
        if not 0.0 < train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        cut = int(round(train_fraction * n))
        if cut < 1 or cut >= n:
            raise ValueError("split leaves an empty train or test set")
        splits = [(np.sort(order[:cut]), np.sort(order[cut:]))]
    results = []
    for train, test in splits:
        b = _fit_and_score("baseline", base_blocks, y, family, train, test)
        a = _fit_and_score("augmented", augmented_blocks, y, family, train, test)
        results.append((b, a))
    return ExtrinsicReport(
        baseline_deviance=float(sum(r[0] for r in results)),
        augmented_deviance=float(sum(r[1] for r in results)),
        folds=results if len(results) > 1 else [],
    )
