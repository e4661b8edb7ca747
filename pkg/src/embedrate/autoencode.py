"""Bottleneck autoencoders (fully connected and convolutional).

The decoder always mirrors the encoder. Both halves are views onto the layers
of a single trained network, so the encoder can be used on its own as an
embedding function.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingTable
from .errors import EmbedrateError, ParseError, ShapeError
from .nn import (Conv, Deconv, Dense, MaxPool, MaxUnpool, Network, Roll, Scale, TrainConfig,
                 Unroll, forward, sgd_train)

__all__ = [
    "SpecError",
    "ConvStage",
    "AutoencoderSpec",
    "build_autoencoder",
    "ae_fit",
    "conv_ae_fit",
    "encode_batch",
    "read_pnm",
    "write_pnm",
]


class SpecError(EmbedrateError, ValueError):
    """An autoencoder specification is inconsistent."""


@dataclass(frozen=True)
class ConvStage:
    """One encoder stage: ``filters`` maps of size ``size`` x ``size``, optional 2x2 pool."""

    size: int = 3
    filters: int = 4
    pool: bool = False


@dataclass(frozen=True)
class AutoencoderSpec:
    input_shape: tuple
    bottleneck: int
    hidden: tuple = ()
    kind: str = "dense"
    hidden_activation: str = "tanh"
    code_activation: str = "identity"
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in np.atleast_1d(self.input_shape)))
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.kind not in ("dense", "conv"):
            raise SpecError(f"kind must be 'dense' or 'conv', got {self.kind!r}")
        size = int(np.prod(self.input_shape))
        if not 1 <= self.bottleneck < size:
            raise SpecError(f"bottleneck {self.bottleneck} must be in 1..{size - 1} (undercomplete)")
        if self.kind == "dense":
            if len(self.input_shape) != 1:
                raise SpecError("a dense autoencoder takes vector input")
            if any(not isinstance(h, (int, np.integer)) or h < 1 for h in self.hidden):
                raise SpecError("dense hidden sizes must be positive integers")
        else:
            if len(self.input_shape) != 3:
                raise SpecError("a convolutional autoencoder takes H x W x C input")
            if not self.hidden:
                raise SpecError("a convolutional autoencoder needs at least one stage")
            object.__setattr__(self, "hidden", tuple(
                s if isinstance(s, ConvStage) else ConvStage(*s) for s in self.hidden))

    @classmethod
    def default_conv(cls, input_shape, bottleneck, **kwargs):
        """Two stages: 3x3 with 4 maps and a 2x2 pool, then 3x3 with 8 maps."""
        stages = (ConvStage(3, 4, True), ConvStage(3, 8, False))
        return cls(input_shape, bottleneck, stages, kind="conv", **kwargs)


def _dense_layers(spec):
    sizes = [spec.input_shape[0], *spec.hidden, spec.bottleneck]
    enc = []
    for i in range(len(sizes) - 1):
        act = spec.code_activation if i == len(sizes) - 2 else spec.hidden_activation
        enc.append(Dense(sizes[i], sizes[i + 1], act))
    back = sizes[::-1]
    dec = []
    for i in range(len(back) - 1):
        act = spec.output_activation if i == len(back) - 2 else spec.hidden_activation
        dec.append(Dense(back[i], back[i + 1], act))
    return enc, dec


def _conv_layers(spec, scale):
    enc = [] if scale is None else [Scale(*scale)]
    shape = spec.input_shape
    plan = []
    for tag, stage in enumerate(spec.hidden):
        c_in = shape[2]
        conv = Conv(stage.size, c_in, stage.filters, spec.hidden_activation)
        try:
            after_conv = conv.output_shape(shape)
        except ShapeError as exc:
            raise SpecError(f"stage {tag}: {exc}") from None
        enc.append(conv)
        pooled_from = None
        shape = after_conv
        if stage.pool:
            pool = MaxPool(tag)
            try:
                shape = pool.output_shape(shape)
            except ShapeError as exc:
                raise SpecError(f"stage {tag}: {exc}") from None
            enc.append(pool)
            pooled_from = after_conv
        plan.append((stage, c_in, pooled_from, tag))
    flat = int(np.prod(shape))
    enc += [Unroll(), Dense(flat, spec.bottleneck, spec.code_activation)]
    dec = [Dense(spec.bottleneck, flat, spec.hidden_activation), Roll(shape)]
    for i, (stage, c_in, pooled_from, tag) in enumerate(reversed(plan)):
        if pooled_from is not None:
            dec.append(MaxUnpool(pooled_from, tag))
        act = spec.output_activation if i == len(plan) - 1 else spec.hidden_activation
        dec.append(Deconv(stage.size, stage.filters, c_in, act))
    return enc, dec


def build_autoencoder(spec: AutoencoderSpec, seed: int = 0, scale=None):
    """Build ``(network, encoder, decoder)`` sharing the same layer objects.

    ``scale`` is an optional ``(mean, std)`` pair per input channel; a fixed
    standardising layer is then put in front of a convolutional encoder.
    """
    if spec.kind == "dense":
        enc, dec = _dense_layers(spec)
    else:
        enc, dec = _conv_layers(spec, scale)
    net = Network(enc + dec, spec.input_shape, seed=seed)
    encoder = Network(enc, spec.input_shape)
    decoder = Network(dec, (spec.bottleneck,))
    return net, encoder, decoder


def ae_fit(x, spec: AutoencoderSpec, cfg: TrainConfig):
    """Train a fully connected autoencoder on the rows of ``x``.

    The training loss is the mean over rows of the summed squared
    reconstruction error. Returns ``(encoder, decoder, history)``.
    """
    if spec.kind != "dense":
        raise SpecError("ae_fit needs a dense spec; use conv_ae_fit for images")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_shape[0]:
        raise ShapeError(f"expected an n x {spec.input_shape[0]} matrix, got shape {x.shape}")
    net, encoder, decoder = build_autoencoder(spec, seed=cfg.seed)
    _, history = sgd_train(net, x, x, cfg)
    return encoder, decoder, history


def conv_ae_fit(images, spec: AutoencoderSpec, cfg: TrainConfig, scale=None):
    """Train a convolutional autoencoder on same-shaped H x W x C tensors.

    With ``scale`` the encoder standardises its input first and the decoder
    reconstructs the standardised tensor. Returns ``(encoder, decoder, history)``.
    """
    if spec.kind != "conv":
        raise SpecError("conv_ae_fit needs a conv spec")
    images = [np.asarray(im, dtype=np.float64) for im in images]
    for i, im in enumerate(images):
        if im.shape != spec.input_shape:
            raise ShapeError(f"image {i} has shape {im.shape}, expected {spec.input_shape}")
    x = np.asarray(images).reshape(len(images), *spec.input_shape)
    net, encoder, decoder = build_autoencoder(spec, seed=cfg.seed, scale=scale)
    target = x if scale is None else net.layers[0].forward(x, {})[0]
    _, history = sgd_train(net, x, target, cfg)
    return encoder, decoder, history


def encode_batch(encoder: Network, xs, ids=None) -> EmbeddingTable:
    """Embed each item with ``encoder``; ids default to ``"0", "1", ...``."""
    xs = list(xs)
    ids = [str(i) for i in range(len(xs))] if ids is None else [str(i) for i in ids]
    if len(ids) != len(xs):
        raise ValueError(f"{len(xs)} items but {len(ids)} ids")
    dim = int(np.prod(encoder.output_shape))
    rows = np.zeros((len(xs), dim))
    for row, (key, item) in enumerate(zip(ids, xs)):
        item = np.asarray(item, dtype=np.float64)
        if item.shape != encoder.input_shape:
            raise ShapeError(f"item {key!r} has shape {item.shape}, encoder expects "
                             f"{encoder.input_shape}")
        rows[row] = forward(encoder, item).prediction.reshape(-1)
    return EmbeddingTable(ids, rows, dim)


# -- portable any-map images ---------------------------------------------------

def _pnm_tokens(data: bytes):
    """Split the header of a PNM file into tokens, skipping comments."""
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated image header")
        tokens.append(data[start:pos].decode("ascii"))
    return tokens, pos + 1


def read_pnm(path) -> np.ndarray:
    """Read a PGM/PPM image (P2, P3, P5, P6) as H x W x C floats in [0, 1]."""
    data = Path(path).read_bytes()
    tokens, pos = _pnm_tokens(data)
    magic = tokens[0]
    if magic not in ("P2", "P3", "P5", "P6"):
        raise ParseError(f"unsupported image magic {magic!r}", 1)
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise ParseError("bad image dimensions", 1) from None
    channels = 3 if magic in ("P3", "P6") else 1
    count = width * height * channels
    if magic in ("P2", "P3"):
        values = np.array(data[pos:].split()[:count], dtype=np.float64)
    else:
        dtype = ">u2" if maxval > 255 else "u1"
        values = np.frombuffer(data[pos:], dtype=dtype, count=count).astype(np.float64)
    if values.size != count:
        raise ParseError(f"expected {count} samples, found {values.size}")
    return values.reshape(height, width, channels) / maxval


def write_pnm(path, image, maxval: int = 255) -> None:
    """Write an H x W x C image in [0, 1] as plain-text PGM (C=1) or PPM (C=3)."""
    im = np.asarray(image, dtype=np.float64)
    if im.ndim == 2:
        im = im[..., None]
    h, w, c = im.shape
    if c not in (1, 3):
        raise ShapeError("images must have 1 or 3 channels")
    q = np.rint(np.clip(im, 0.0, 1.0) * maxval).astype(int)
    magic = "P2" if c == 1 else "P3"
    rows = [" ".join(str(v) for v in q[i].reshape(-1)) for i in range(h)]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{magic}\n{w} {h}\n{maxval}\n" + "\n".join(rows) + "\n")
