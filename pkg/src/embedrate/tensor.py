"""Dense float64 kernels and the seeded random generator.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Rank-3 image
tensors are laid out height x width x channel.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

__all__ = [
    "SeededRng",
    "as_tensor",
    "matmul",
    "conv2d_valid",
    "conv2d_transpose",
    "unroll",
    "roll",
]

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def as_tensor(x, ndim=None, name="tensor"):
    """Convert ``x`` to a float64 array, optionally checking its rank."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name} must have rank {ndim}, got shape {arr.shape}")
    return arr


class SeededRng:
    """SplitMix64 generator with explicit, portable state.

    The state is a single unsigned 64-bit counter. Each draw advances it by
    the golden-ratio increment ``0x9E3779B97F4A7C15`` (mod 2**64) and emits
    the mixed value::

        z = state
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9   (mod 2**64)
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB   (mod 2**64)
        z = z ^ (z >> 31)

    Uniform doubles are ``(z >> 11) * 2**-53``. Because each output depends
    only on the counter, blocks of draws are generated vectorised and the
    stream is identical on every platform.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK64
        self.state = self.seed

    def next_u64(self, size: int) -> np.ndarray:
        """Return the next ``size`` raw 64-bit outputs."""
        size = int(size)
        if size < 0:
            raise ValueError("size must be non-negative")
        start = self.state
        # counters start+GAMMA*(1..size) wrap modulo 2**64 in uint64 arithmetic
        steps = np.arange(1, size + 1, dtype=np.uint64)
        z = np.uint64(start) + steps * np.uint64(_GAMMA)
        self.state = (start + size * _GAMMA) & _MASK64
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def uniform(self, size=None, low=0.0, high=1.0):
        """Uniform draws on ``[low, high)``; a float when ``size`` is None."""
        shape = () if size is None else np.atleast_1d(size)
        n = int(np.prod(shape)) if size is not None else 1
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u = low + (high - low) * u
        if size is None:
            return float(u[0])
        return u.reshape(tuple(int(s) for s in shape))

    def normal(self, size, loc=0.0, scale=1.0):
        """Gaussian draws by the Box-Muller transform."""
        shape = tuple(int(s) for s in np.atleast_1d(size))
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1], safe for log
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return loc + scale * z[:n].reshape(shape)

    def integers(self, high: int, size=None):
        """Integers uniform on ``0..high-1``."""
        if high < 1:
            raise ValueError("high must be >= 1")
        u = self.uniform(1 if size is None else size)
        out = np.minimum((u * high).astype(np.int64), high - 1)
        return int(out[0]) if size is None else out

    def permutation(self, n: int) -> np.ndarray:
        """A uniformly random permutation of ``0..n-1``."""
        return np.argsort(self.uniform(n), kind="stable")

    def choice_cdf(self, cdf: np.ndarray, size) -> np.ndarray:
        """Sample indices from a discrete distribution given its CDF."""
        u = self.uniform(size) * cdf[-1]
        return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def matmul(a, b) -> np.ndarray:
    """Matrix product of two rank-2 tensors."""
    a = as_tensor(a, 2, "a")
    b = as_tensor(b, 2, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def conv2d_valid(x, filters) -> np.ndarray:
    """Stride-1, unpadded cross-correlation.

    Parameters
    ----------
    x : array, shape (H, W, C) or (n, H, W, C)
    filters : array, shape (f, f, C, K)

    Returns
    -------
    array, shape (H-f+1, W-f+1, K), with a leading batch axis if ``x`` had one.
    ``out[i, j, k] = sum_{u, v, c} x[i+u, j+v, c] * filters[u, v, c, k]``.
    """
    x = as_tensor(x)
    w = as_tensor(filters, 4, "filters")
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4:
        raise ShapeError(f"input must have rank 3 or 4, got shape {x.shape}")
    n, h, wd, c = x.shape
    fh, fw, fc, k = w.shape
    if fc != c:
        raise ShapeError(f"filter channels {fc} do not match input channels {c}")
    if fh > h or fw > wd:
        raise ShapeError(f"filter {w.shape[:2]} larger than input {x.shape[1:3]}")
    ho, wo = h - fh + 1, wd - fw + 1
    out = np.zeros((n, ho, wo, k))
    for u in range(fh):
        for v in range(fw):
            out += x[:, u:u + ho, v:v + wo, :] @ w[u, v]
    return out[0] if single else out


def conv2d_transpose(y, filters) -> np.ndarray:
    """Transpose of :func:`conv2d_valid` with respect to its input.

    Maps (n, Ho, Wo, K) back to (n, Ho+f-1, Wo+f-1, C) using the same
    ``filters`` of shape (f, f, C, K). Equivalent to a full correlation with
    the flipped kernel, i.e. a "deconvolution".
    """
    y = as_tensor(y)
    w = as_tensor(filters, 4, "filters")
    single = y.ndim == 3
    if single:
        y = y[None]
    n, ho, wo, k = y.shape
    fh, fw, c, fk = w.shape
    if fk != k:
        raise ShapeError(f"filter outputs {fk} do not match input channels {k}")
    out = np.zeros((n, ho + fh - 1, wo + fw - 1, c))
    for u in range(fh):
        for v in range(fw):
            out[:, u:u + ho, v:v + wo, :] += y @ w[u, v].T
    return out[0] if single else out


def unroll(t) -> np.ndarray:
    """Flatten an H x W x C tensor left to right, top to bottom, front to back.

    Element ``(i, j, k)`` lands at ``k*H*W + i*W + j``. A leading batch axis
    is preserved when ``t`` has rank 4.
    """
    t = as_tensor(t)
    if t.ndim == 3:
        return np.ascontiguousarray(t.transpose(2, 0, 1)).reshape(-1)
    if t.ndim == 4:
        return np.ascontiguousarray(t.transpose(0, 3, 1, 2)).reshape(t.shape[0], -1)
    raise ShapeError(f"unroll expects rank 3 (or batched rank 4), got shape {t.shape}")


def roll(v, shape) -> np.ndarray:
    """Inverse of :func:`unroll`: rebuild an H x W x C tensor from a vector."""
    v = as_tensor(v)
    h, w, c = (int(s) for s in shape)
    size = h * w * c
    if v.ndim == 1:
        if v.size != size:
            raise ShapeError(f"cannot roll length {v.size} into shape {(h, w, c)}")
        return np.ascontiguousarray(v.reshape(c, h, w).transpose(1, 2, 0))
    if v.ndim == 2:
        if v.shape[1] != size:
            raise ShapeError(f"cannot roll length {v.shape[1]} into shape {(h, w, c)}")
        return np.ascontiguousarray(v.reshape(-1, c, h, w).transpose(0, 2, 3, 1))
    raise ShapeError(f"roll expects a vector or a batch of vectors, got shape {v.shape}")
