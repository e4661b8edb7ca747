"""Convolutional regional autoencoder (CRAE) over geographic data cuboids.

Around each risk location a q x q lattice of neighbour cells is spanned. Each
cell takes the feature vector of its base territory, here the territory of
the nearest source point (a Voronoi partition), giving a q x q x p "data
square cuboid" that a convolutional autoencoder compresses to an embedding.

Coordinates are planar; no geodesic correction is applied.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .autoencode import AutoencoderSpec, ConvStage, conv_ae_fit
from .dimred import standardize
from .embeddings import EmbeddingTable
from .errors import DomainError, ParseError, ShapeError
from .nn import Network, TrainConfig, format_float, forward

__all__ = [
    "GeoPointSet",
    "NeighborGrid",
    "DataCuboid",
    "span_grid",
    "attach_features",
    "build_cuboids",
    "default_spacing",
    "crae_fit",
    "crae_embed",
    "smoothness_score",
    "read_geo_points",
    "write_geo_points",
]


@dataclass(frozen=True)
class GeoPointSet:
    ids: list
    coords: np.ndarray  # n x 2
    features: np.ndarray  # n x p
    feature_names: list

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 2)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(len(coords), -1)
        ids = [str(i) for i in self.ids]
        if not (len(ids) == len(coords) == len(feats)):
            raise ShapeError("ids, coordinates and features must have the same length")
        if len(set(ids)) != len(ids):
            raise ValueError("point ids must be unique")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        names = list(self.feature_names) or [f"f{j + 1}" for j in range(feats.shape[1])]
        if len(names) != feats.shape[1]:
            raise ShapeError(f"{len(names)} feature names for {feats.shape[1]} features")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "feature_names", names)

    def __len__(self):
        return len(self.ids)

    @property
    def p(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class NeighborGrid:
    center: tuple
    q: int
    spacing: float
    cells: np.ndarray  # q x q x 2

    def points(self) -> np.ndarray:
        return self.cells.reshape(-1, 2)


@dataclass(frozen=True)
class DataCuboid:
    """q x q x channels array; the last channel is the coverage mask when ``masked``."""

    values: np.ndarray
    source_id: str = ""
    masked: bool = True

    @property
    def q(self) -> int:
        return self.values.shape[0]


def _lattice_offsets(q, spacing):
    half = (q - 1) / 2.0
    steps = (np.arange(q) - half) * spacing
    return np.stack(np.meshgrid(steps, steps, indexing="ij"), axis=-1)  # [i, j] -> (di, dj)


def span_grid(center, q: int = 9, spacing: float = 1.0) -> NeighborGrid:
    """Cells ``center + (i - (q-1)/2, j - (q-1)/2) * spacing`` for i, j in 0..q-1."""
    if int(q) != q or q < 1 or q % 2 == 0:
        raise ValueError(f"q must be an odd positive integer, got {q}")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    c = np.asarray(center, dtype=np.float64).reshape(2)
    cells = c + _lattice_offsets(int(q), float(spacing))
    return NeighborGrid((float(c[0]), float(c[1])), int(q), float(spacing), cells)


def _nearest_sources(queries, coords, tree):
    """Index of the nearest source for every query point; ties go to the lowest index."""
    k = min(2, len(coords))
    dist, idx = tree.query(queries, k=k)
    if k == 1:
        return idx.reshape(-1), dist.reshape(-1)
    best, second = idx[:, 0].copy(), idx[:, 1]
    # exact squared distances, computed the same way as a brute-force scan
    d_best = np.sum((queries - coords[best]) ** 2, axis=1)
    d_second = np.sum((queries - coords[second]) ** 2, axis=1)
    near_tie = d_second <= d_best * (1 + 1e-9) + 1e-300
    for row in np.flatnonzero(near_tie):
        radius = np.sqrt(d_best[row]) * (1 + 1e-6) + 1e-12
        cand = np.array(sorted(tree.query_ball_point(queries[row], radius)))
        d = np.sum((queries[row] - coords[cand]) ** 2, axis=1)
        best[row] = cand[np.argmin(d)]
    d_exact = np.sqrt(np.sum((queries - coords[best]) ** 2, axis=1))
    return best, d_exact


def _cuboid_values(cells, pts, tree, cutoff, mask):
    q = cells.shape[0]
    flat = cells.reshape(-1, 2)
    src, dist = _nearest_sources(flat, pts.coords, tree)
    covered = np.ones(flat.shape[0], dtype=bool) if cutoff is None else dist < cutoff
    feats = np.where(covered[:, None], pts.features[src], 0.0)
    if mask:
        feats = np.hstack([feats, covered[:, None].astype(np.float64)])
    return feats.reshape(q, q, -1)


def attach_features(grid: NeighborGrid, pts: GeoPointSet, cutoff=None, mask: bool = True,
                    source_id: str = "") -> DataCuboid:
    """Fill each grid cell with the features of its nearest source point.

    Cells at distance ``>= cutoff`` from every source get zero features and a
    mask value of 0 (so ``cutoff=0`` empties the cuboid). ``cutoff=None``
    covers every cell. Distance ties go to the earliest point in ``pts``.
    """
    if len(pts) == 0:
        raise ValueError("cannot attach features from an empty point set")
    tree = cKDTree(pts.coords)
    return DataCuboid(_cuboid_values(grid.cells, pts, tree, cutoff, mask), source_id, mask)


def default_spacing(coords) -> float:
    """Domain diameter (bounding-box diagonal) divided by 64."""
    coords = np.asarray(coords, dtype=np.float64)
    diam = float(np.linalg.norm(coords.max(axis=0) - coords.min(axis=0)))
    return diam / 64.0 if diam > 0 else 1.0


def build_cuboids(pts: GeoPointSet, q: int = 9, spacing=None, cutoff=None, mask: bool = True,
                  centers=None, ids=None) -> list:
    """One cuboid per center (by default every point of ``pts``)."""
    if len(pts) == 0:
        raise ValueError("cannot build cuboids from an empty point set")
    spacing = default_spacing(pts.coords) if spacing is None else spacing
    if centers is None:
        centers, ids = pts.coords, pts.ids
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    ids = [str(i) for i in range(len(centers))] if ids is None else list(ids)
    offsets = span_grid((0.0, 0.0), q, spacing).cells
    tree = cKDTree(pts.coords)
    return [DataCuboid(_cuboid_values(c + offsets, pts, tree, cutoff, mask), key, mask)
            for c, key in zip(centers, ids)]


def _channel_scale(cuboids):
    stack = np.array([c.values for c in cuboids])
    channels = stack.shape[-1]
    _, mean, std = standardize(stack.reshape(-1, channels))
    if cuboids[0].masked:
        mean[-1], std[-1] = 0.0, 0.0  # mask channel passes through unscaled
    return mean, std


def crae_fit(cuboids, dim: int, spec: AutoencoderSpec = None, cfg: TrainConfig = None,
             history: list = None) -> Network:
    """Train a convolutional autoencoder on cuboids and return its encoder.

    Feature channels are standardised with statistics pooled over every cell
    of every cuboid; the encoder carries this standardisation as its first
    layer, so it takes raw cuboids. The mask channel is left as is.
    """
    if not cuboids:
        raise ValueError("crae_fit needs at least one cuboid")
    shape = cuboids[0].values.shape
    for c in cuboids:
        if c.values.shape != shape:
            raise ShapeError(f"cuboid {c.source_id!r} has shape {c.values.shape}, expected {shape}")
    if spec is None:
        spec = AutoencoderSpec(shape, dim, (ConvStage(3, 8, False), ConvStage(3, 8, False)), kind="conv")
    elif spec.input_shape != shape or spec.bottleneck != dim:
        raise ShapeError(f"spec expects {spec.input_shape} -> {spec.bottleneck}, got {shape} -> {dim}")
    cfg = cfg or TrainConfig(learning_rate=0.002, epochs=40, batch_size=16)
    encoder, _, hist = conv_ae_fit([c.values for c in cuboids], spec, cfg, scale=_channel_scale(cuboids))
    if history is not None:
        history.extend(hist)
    return encoder


def crae_embed(encoder: Network, cuboid) -> np.ndarray:
    values = cuboid.values if isinstance(cuboid, DataCuboid) else np.asarray(cuboid, dtype=np.float64)
    if values.shape != encoder.input_shape:
        raise ShapeError(f"cuboid shape {values.shape} does not match encoder input {encoder.input_shape}")
    return forward(encoder, values).prediction.reshape(-1)


def smoothness_score(embeddings: EmbeddingTable, coords, k: int = 5) -> float:
    """Mean over points of the mean cosine to their ``k`` nearest spatial neighbours.

    Higher is smoother. Neighbour ties are resolved by table order.
    """
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    n = len(embeddings)
    if coords.shape[0] != n:
        raise ShapeError(f"{coords.shape[0]} coordinates for {n} embeddings")
    if not 1 <= k < n:
        raise ValueError(f"k must be in 1..{n - 1}")
    v = embeddings.vectors
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms == 0):
        bad = embeddings.ids[int(np.flatnonzero(norms == 0)[0])]
        raise DomainError(f"zero embedding vector for id {bad!r}")
    unit = v / norms[:, None]
    d2 = np.sum((coords[:, None, :] - coords[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    nbrs = np.argsort(d2, axis=1, kind="stable")[:, :k]
    sims = np.einsum("id,ikd->ik", unit, unit[nbrs])
    return float(np.mean(sims.mean(axis=1)))


def read_geo_points(path) -> GeoPointSet:
    """CSV with header ``id,x,y,f1,...,fp``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["id", "x", "y"]:
        raise ParseError("geo header must start with 'id,x,y'", 1)
    header = rows[0]
    ids, xy, feats = [], [], []
    for no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", no)
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise ParseError(str(exc), no) from None
        ids.append(row[0])
        xy.append(vals[:2])
        feats.append(vals[2:])
    p = len(header) - 3
    return GeoPointSet(ids, np.array(xy).reshape(-1, 2), np.array(feats).reshape(-1, p), header[3:])


def write_geo_points(pts: GeoPointSet, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "x", "y", *pts.feature_names])
        for key, xy, f in zip(pts.ids, pts.coords, pts.features):
            writer.writerow([key, *(format_float(v) for v in xy), *(format_float(v) for v in f)])
