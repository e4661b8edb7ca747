"""Seeded synthetic datasets with planted structure.

Each generator returns in-memory data; :func:`synth_generate` writes the
matching files. Every draw comes from :class:`SeededRng`, so a seed fixes the
output byte for byte.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .autoencode import write_pnm
from .geo import GeoPointSet, write_geo_points
from .sequence import write_sequences
from .tables import write_table
from .tensor import SeededRng

__all__ = [
    "tabular_latent",
    "marker_sequences",
    "cluster_corpus",
    "square_images",
    "smooth_geo_field",
    "synth_generate",
    "GENERATORS",
]


def tabular_latent(n=2000, n_rating=2, n_emerging=10, n_factors=2, noise=0.3, seed=0):
    """Poisson claim counts driven by a low-rank "emerging data" block.

    Planted structure: the emerging block is ``Z = F L' + noise * E`` with
    ``n_factors`` latent columns ``F``. The hidden factor entering the mean is
    the fixed linear map ``h = Z L (L'L)^-1`` of the visible emerging
    columns, and ``log E[y] = -1 + 0.3 r_1 - 0.2 r_2 + h c`` with
    ``c = (0.6, -0.4, ...)``. PCA of ``Z`` recovers the span of ``L``, so
    PCA codes carry the signal that the rating columns alone miss.

    Returns a dict with ``ids``, ``rating`` (n x n_rating), ``emerging``
    (n x n_emerging), ``y`` and ``columns``.
    """
    if n < 10 or n_rating < 0 or n_emerging < n_factors or n_factors < 1:
        raise ValueError("invalid tabular-latent parameters")
    rng = SeededRng(seed)
    loadings = rng.normal((n_emerging, n_factors))
    factors = rng.normal((n, n_factors))
    z = factors @ loadings.T + noise * rng.normal((n, n_emerging))
    hidden = z @ loadings @ np.linalg.inv(loadings.T @ loadings)
    rating = rng.normal((n, n_rating))
    coef_r = np.array([0.3, -0.2, 0.1, -0.1] * n_rating)[:n_rating]
    coef_h = np.array([0.6, -0.4, 0.3, -0.2] * n_factors)[:n_factors]
    eta = -1.0 + rating @ coef_r + hidden @ coef_h
    y = _poisson(rng, np.exp(eta))
    columns = [f"r{j + 1}" for j in range(n_rating)] + [f"z{j + 1}" for j in range(n_emerging)] + ["y"]
    return {"ids": [str(i) for i in range(n)], "rating": rating, "emerging": z, "y": y,
            "columns": columns}


def _poisson(rng, mean):
    """Poisson draws by inversion of the CDF (means are small here)."""
    u = rng.uniform(mean.shape)
    k = np.zeros(mean.shape)
    p = np.exp(-mean)
    cdf = p.copy()
    active = u > cdf
    while np.any(active):
        k[active] += 1
        p = np.where(active, p * mean / np.maximum(k, 1), p)
        cdf = np.where(active, cdf + p, cdf)
        active = active & (u > cdf) & (k < 1000)
    return k


def marker_sequences(n=200, max_len=10, n_symbols=4, seed=0):
    """One-hot symbol sequences labelled 1 iff the marker symbol 0 occurs.

    Lengths are uniform on 1..max_len; about half the sequences are
    positive, with the marker placed at a uniform position. Other steps use
    symbols 1..n_symbols-1.
    """
    if n < 1 or max_len < 1 or n_symbols < 2:
        raise ValueError("invalid marker-sequence parameters")
    rng = SeededRng(seed)
    eye = np.eye(n_symbols)
    seqs, labels = [], []
    for _ in range(n):
        length = 1 + rng.integers(max_len)
        label = rng.integers(2)
        symbols = 1 + rng.integers(n_symbols - 1, length)
        if label:
            symbols[rng.integers(length)] = 0
        seqs.append(eye[symbols])
        labels.append(float(label))
    return seqs, np.array(labels)


def cluster_corpus(n_docs=2000, vocab_size=20, doc_len=10, seed=0):
    """Documents drawn from one of two disjoint token clusters.

    Tokens ``a0..a{m-1}`` and ``b0..b{m-1}`` with ``m = vocab_size // 2``.
    Each document picks a cluster with probability 1/2, then draws
    ``doc_len`` tokens uniformly from it; the clusters never co-occur.
    """
    if vocab_size < 4 or vocab_size % 2 or n_docs < 1 or doc_len < 2:
        raise ValueError("invalid cluster-corpus parameters")
    rng = SeededRng(seed)
    m = vocab_size // 2
    docs = []
    for _ in range(n_docs):
        prefix = "ab"[rng.integers(2)]
        docs.append([f"{prefix}{t}" for t in rng.integers(m, doc_len)])
    return docs


def square_images(n=64, size=16, min_side=3, max_side=7, noise=0.02, seed=0):
    """Dark ``size`` x ``size`` images, each with one bright axis-aligned square.

    Square sides are uniform on ``min_side..max_side`` and positions uniform
    within the frame. Pixel values lie in [0, 1].
    """
    if not 1 <= min_side <= max_side <= size:
        raise ValueError("invalid square sizes")
    rng = SeededRng(seed)
    images = []
    for _ in range(n):
        side = min_side + rng.integers(max_side - min_side + 1)
        top = rng.integers(size - side + 1)
        left = rng.integers(size - side + 1)
        im = noise * rng.uniform((size, size, 1))
        im[top:top + side, left:left + side, 0] = 1.0 - noise * rng.uniform((side, side))
        images.append(im)
    return images


def smooth_geo_field(n=500, p=4, noise=0.6, seed=0):
    """Points in the unit square with a smooth sinusoidal census field.

    Feature ``j`` at location ``s`` is
    ``sin(2 pi (a_j . s) + phi_j) + noise * e`` where ``a_j`` has entries in
    [0.5, 1.5], ``phi_j`` is uniform on [0, 2 pi) and ``e`` is independent
    per point (territory-level noise). The field is smooth in space while
    each point's own vector is not.
    """
    if n < 2 or p < 1:
        raise ValueError("invalid smooth-geo-field parameters")
    rng = SeededRng(seed)
    coords = rng.uniform((n, 2))
    freq = rng.uniform((p, 2), 0.5, 1.5)
    phase = rng.uniform(p, 0.0, 2 * np.pi)
    field = np.sin(2 * np.pi * coords @ freq.T + phase)
    feats = field + noise * rng.normal((n, p))
    return GeoPointSet([str(i) for i in range(n)], coords, feats, [f"f{j + 1}" for j in range(p)])


GENERATORS = ("tabular-latent", "marker-sequences", "cluster-corpus", "square-images",
              "smooth-geo-field")


def synth_generate(kind: str, output, seed: int = 0, **params) -> list:
    """Write a synthetic dataset and return the list of paths written.

    ``output`` is a file path, except for ``square-images`` where it is a
    directory receiving ``img000.pgm``, ``img001.pgm``, ...
    """
    output = Path(output)
    if kind == "tabular-latent":
        data = tabular_latent(seed=seed, **params)
        values = np.column_stack([data["rating"], data["emerging"], data["y"]])
        write_table(output, data["ids"], data["columns"], values)
        return [output]
    if kind == "marker-sequences":
        seqs, labels = marker_sequences(seed=seed, **params)
        write_sequences(output, seqs, labels)
        return [output]
    if kind == "cluster-corpus":
        docs = cluster_corpus(seed=seed, **params)
        output.write_text("".join(" ".join(d) + "\n" for d in docs), encoding="utf-8")
        return [output]
    if kind == "square-images":
        output.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, im in enumerate(square_images(seed=seed, **params)):
            path = output / f"img{i:03d}.pgm"
            write_pnm(path, im)
            paths.append(path)
        return paths
    if kind == "smooth-geo-field":
        write_geo_points(smooth_geo_field(seed=seed, **params), output)
        return [output]
    raise ValueError(f"unknown generator {kind!r}; expected one of {GENERATORS}")
