"""Standardisation and principal component analysis.

PCA is the linear encoder/decoder pair minimising the summed squared
reconstruction error. Eigenvectors come from a cyclic Jacobi eigensolver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ShapeError
from .nn import format_float

__all__ = [
    "standardize",
    "jacobi_eigh",
    "PcaModel",
    "pca_fit",
    "pca_encode",
    "pca_decode",
    "reconstruction_error",
    "save_pca",
    "load_pca",
]


def standardize(x):
    """Center and scale each column to mean 0, population stddev 1.

    Columns whose stddev is negligible relative to their mean map to zeros
    and report a stddev of 1.

    Returns
    -------
    z : ndarray (n, p)
    mean : ndarray (p,)
    std : ndarray (p,)
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"standardize expects an n x p matrix, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValueError("standardize needs at least 2 rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    std = np.where(constant, 1.0, std)
    z = (x - mean) / std
    z[:, constant] = 0.0
    return z, mean, std


def jacobi_eigh(a, tol=1e-12, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all (p, q) pairs in row order until the Frobenius norm of the
    off-diagonal part drops below ``tol * max(1, ||A||_F)``.

    Returns
    -------
    eigenvalues : ndarray, unsorted (diagonal of the rotated matrix)
    eigenvectors : ndarray, columns are eigenvectors
    off_norm : float, off-diagonal norm at exit
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"jacobi_eigh expects a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("jacobi_eigh expects a symmetric matrix")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    threshold = tol * max(1.0, float(np.linalg.norm(a)))

    def off(m):
        return float(np.sqrt(max(np.sum(m * m) - np.sum(np.diag(m) ** 2), 0.0)))

    off_norm = off(a)
    for _ in range(max_sweeps):
        if off_norm < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(diff) > 1e150 * abs(apq):  # theta^2 would overflow; t ~ apq / diff
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        off_norm = off(a)
    return np.diag(a).copy(), v, off_norm


def _canonical_order(values, vectors):
    """Sort eigenpairs by decreasing eigenvalue with a deterministic sign rule."""
    vectors = vectors.copy()
    for j in range(vectors.shape[1]):
        k = int(np.argmax(np.abs(vectors[:, j])))
        if vectors[k, j] < 0:
            vectors[:, j] = -vectors[:, j]
    # lexsort keys are applied last-first: eigenvalue descending, then entries
    keys = [-vectors[i] for i in range(vectors.shape[0] - 1, -1, -1)] + [-values]
    order = np.lexsort(keys)
    return values[order], vectors[:, order]


@dataclass(frozen=True)
class PcaModel:
    """Fitted PCA.

    ``components`` has orthonormal columns (p x l). ``spectrum`` holds all p
    eigenvalues of the sample covariance (1/(n-1) convention), sorted
    non-increasing; ``eigenvalues`` is its first l entries.
    """

    mean: np.ndarray
    components: np.ndarray
    spectrum: np.ndarray
    n_samples: int

    @property
    def eigenvalues(self):
        return self.spectrum[: self.dim]

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    @property
    def n_features(self) -> int:
        return self.components.shape[0]

    @property
    def discarded(self):
        return self.spectrum[self.dim:]

    def encode(self, x):
        return pca_encode(self, x)

    def decode(self, z):
        return pca_decode(self, z)


def pca_fit(x, dim: int) -> PcaModel:
    """Fit the top-``dim`` principal components of ``x`` (n x p)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"pca_fit expects an n x p matrix, got shape {x.shape}")
    n, p = x.shape
    if n < 2:
        raise ValueError("pca_fit needs at least 2 rows")
    if not 1 <= dim <= p:
        raise ValueError(f"embedding dimension must be in 1..{p}, got {dim}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    values, vectors, _ = jacobi_eigh(cov)
    values, vectors = _canonical_order(values, vectors)
    return PcaModel(mean=mean, components=vectors[:, :dim].copy(), spectrum=values, n_samples=n)


def pca_encode(model: PcaModel, x) -> np.ndarray:
    """Coordinates of ``x - mean`` in the component basis.

    Accepts one vector of length p or a batch of rows.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_features:
        raise ShapeError(f"expected length {model.n_features}, got {x.shape[-1]}")
    return (x - model.mean) @ model.components


def pca_decode(model: PcaModel, z) -> np.ndarray:
    """``mean + components @ z`` (row-wise for a batch)."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != model.dim:
        raise ShapeError(f"expected code length {model.dim}, got {z.shape[-1]}")
    return model.mean + z @ model.components.T


def reconstruction_error(encode, decode, x) -> float:
    """Sum over rows and columns of ``(decode(encode(x_i))_j - x_ij)**2``."""
    x = np.asarray(x, dtype=np.float64)
    total = 0.0
    for row in x:
        total += float(np.sum((np.asarray(decode(encode(row)), dtype=np.float64) - row) ** 2))
    return total


def save_pca(model: PcaModel, path) -> None:
    lines = [
        "embedrate-pca 1",
        f"shape {model.n_features} {model.dim}",
        f"n_samples {model.n_samples}",
        "mean " + " ".join(format_float(v) for v in model.mean),
        "spectrum " + " ".join(format_float(v) for v in model.spectrum),
    ]
    for row in model.components:
        lines.append("row " + " ".join(format_float(v) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_pca(path) -> PcaModel:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "embedrate-pca 1":
        raise ParseError("not an embedrate PCA file", 1)
    try:
        p, dim = (int(v) for v in lines[1].split()[1:])
        n = int(lines[2].split()[1])
        mean = np.array([float(v) for v in lines[3].split()[1:]])
        spectrum = np.array([float(v) for v in lines[4].split()[1:]])
        rows = [[float(v) for v in line.split()[1:]] for line in lines[5:5 + p]]
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed PCA file: {exc}") from None
    comps = np.array(rows)
    if comps.shape != (p, dim) or mean.size != p or spectrum.size != p:
        raise ParseError("PCA file shapes are inconsistent with its header", 2)
    return PcaModel(mean=mean, components=comps, spectrum=spectrum, n_samples=n)
