"""A small fixed-layer neural network library with manual backpropagation.

Layers work on batches (leading axis ``n``). A :class:`Network` validates the
shape chain of its layers at construction, and the module-level functions
:func:`forward`, :func:`backward`, :func:`sgd_train`, :func:`grad_check` and
:func:`extract_embedding` operate on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParseError, ShapeError
from .tensor import SeededRng, conv2d_transpose, conv2d_valid, roll, unroll

__all__ = [
    "ACTIVATIONS",
    "LOSSES",
    "Dense",
    "Conv",
    "Deconv",
    "MaxPool",
    "MaxUnpool",
    "Unroll",
    "Roll",
    "Recurrent",
    "Scale",
    "Network",
    "Activations",
    "TrainConfig",
    "forward",
    "backward",
    "loss_value",
    "dataset_loss",
    "sgd_train",
    "grad_check",
    "extract_embedding",
    "save_network",
    "load_network",
    "format_float",
]


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# name -> (function of z, derivative as a function of (z, g(z)))
ACTIVATIONS = {
    "identity": (lambda z: z, lambda z, y: np.ones_like(z)),
    "tanh": (np.tanh, lambda z, y: 1.0 - y * y),
    "sigmoid": (_sigmoid, lambda z, y: y * (1.0 - y)),
    # subgradient 0 at the kink
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, y: (z > 0).astype(np.float64)),
}

LOSSES = ("squared-error", "binary-cross-entropy")

_BCE_CLIP = 1e-12


def _check_activation(name):
    if name not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}")
    return name


def format_float(v) -> str:
    """17 significant digits, enough for an exact float64 round trip."""
    return "%.17g" % v


class Layer:
    """Base class. Subclasses define ``kind``, shapes, forward and backward."""

    kind = "layer"

    def param_names(self):
        return ()

    def params(self):
        return {name: getattr(self, name) for name in self.param_names()}

    def init(self, rng: SeededRng):
        pass

    def config(self) -> dict:
        return {}

    def output_shape(self, input_shape):
        raise NotImplementedError

    def forward(self, x, ctx):
        raise NotImplementedError

    def backward(self, dy, cache):
        raise NotImplementedError

    def __repr__(self):
        cfg = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{type(self).__name__}({cfg})"


class _Activated(Layer):
    def _activate(self, z):
        y = ACTIVATIONS[self.activation][0](z)
        return y

    def _dz(self, dy, z, y):
        return dy * ACTIVATIONS[self.activation][1](z, y)

    def backward(self, dy, cache):
        _, z, y = cache
        return self.backward_from_z(self._dz(dy, z, y), cache)


def _uniform_init(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(shape, -bound, bound)


class Dense(_Activated):
    """Fully connected layer ``y = g(x W + b)`` with ``W`` of shape in x out."""

    kind = "dense"

    def __init__(self, n_in: int, n_out: int, activation: str = "tanh", weights=None, bias=None):
        self.n_in, self.n_out = int(n_in), int(n_out)
        if self.n_in < 1 or self.n_out < 1:
            raise ShapeError(f"dense sizes must be positive, got {n_in}->{n_out}")
        self.activation = _check_activation(activation)
        self.weights = None if weights is None else np.array(weights, dtype=np.float64)
        self.bias = None if bias is None else np.array(bias, dtype=np.float64)
        if self.weights is not None and self.weights.shape != (self.n_in, self.n_out):
            raise ShapeError(f"weights shape {self.weights.shape} != {(self.n_in, self.n_out)}")
        if self.bias is not None and self.bias.shape != (self.n_out,):
            raise ShapeError(f"bias shape {self.bias.shape} != {(self.n_out,)}")

    def param_names(self):
        return ("weights", "bias")

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out, "activation": self.activation}

    def init(self, rng):
        if self.weights is None:
            self.weights = _uniform_init(rng, (self.n_in, self.n_out), self.n_in)
        if self.bias is None:
            self.bias = _uniform_init(rng, (self.n_out,), self.n_in)

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.n_in,):
            raise ShapeError(f"dense layer expects input ({self.n_in},), got {tuple(input_shape)}")
        return (self.n_out,)

    def forward(self, x, ctx):
        z = x @ self.weights + self.bias
        y = self._activate(z)
        return y, (x, z, y)

    def backward_from_z(self, dz, cache):
        x = cache[0]
        return dz @ self.weights.T, {"weights": x.T @ dz, "bias": dz.sum(axis=0)}


class Conv(_Activated):
    """Valid, stride-1 convolution (cross-correlation) with K filters."""

    kind = "conv"

    def __init__(self, size: int, c_in: int, c_out: int, activation: str = "tanh",
                 filters=None, bias=None):
        self.size, self.c_in, self.c_out = int(size), int(c_in), int(c_out)
        self.activation = _check_activation(activation)
        self.filters = None if filters is None else np.array(filters, dtype=np.float64)
        self.bias = None if bias is None else np.array(bias, dtype=np.float64)
        shape = (self.size, self.size, self.c_in, self.c_out)
        if self.filters is not None and self.filters.shape != shape:
            raise ShapeError(f"filters shape {self.filters.shape} != {shape}")

    def param_names(self):
        return ("filters", "bias")

    def config(self):
        return {"size": self.size, "c_in": self.c_in, "c_out": self.c_out,
                "activation": self.activation}

    def init(self, rng):
        fan_in = self.size * self.size * self.c_in
        if self.filters is None:
            self.filters = _uniform_init(rng, (self.size, self.size, self.c_in, self.c_out), fan_in)
        if self.bias is None:
            self.bias = _uniform_init(rng, (self.c_out,), fan_in)

    def output_shape(self, input_shape):
        if len(input_shape) != 3 or input_shape[2] != self.c_in:
            raise ShapeError(f"conv layer expects (H, W, {self.c_in}), got {tuple(input_shape)}")
        h, w, _ = input_shape
        if self.size > h or self.size > w:
            raise ShapeError(f"filter size {self.size} larger than input {h}x{w}")
        return (h - self.size + 1, w - self.size + 1, self.c_out)

    def forward(self, x, ctx):
        z = conv2d_valid(x, self.filters) + self.bias
        y = self._activate(z)
        return y, (x, z, y)

    def backward_from_z(self, dz, cache):
        x = cache[0]
        ho, wo = dz.shape[1:3]
        df = np.empty_like(self.filters)
        for u in range(self.size):
            for v in range(self.size):
                df[u, v] = np.tensordot(x[:, u:u + ho, v:v + wo, :], dz, axes=([0, 1, 2], [0, 1, 2]))
        return conv2d_transpose(dz, self.filters), {"filters": df, "bias": dz.sum(axis=(0, 1, 2))}


class Deconv(_Activated):
    """Transposed convolution, growing H x W by ``size - 1``.

    ``filters`` has shape (f, f, c_out, c_in) so that the forward map is
    :func:`conv2d_transpose` and its input gradient is :func:`conv2d_valid`.
    """

    kind = "deconv"

    def __init__(self, size: int, c_in: int, c_out: int, activation: str = "tanh",
                 filters=None, bias=None):
        self.size, self.c_in, self.c_out = int(size), int(c_in), int(c_out)
        self.activation = _check_activation(activation)
        self.filters = None if filters is None else np.array(filters, dtype=np.float64)
        self.bias = None if bias is None else np.array(bias, dtype=np.float64)

    def param_names(self):
        return ("filters", "bias")

    def config(self):
        return {"size": self.size, "c_in": self.c_in, "c_out": self.c_out,
                "activation": self.activation}

    def init(self, rng):
        fan_in = self.size * self.size * self.c_in
        if self.filters is None:
            self.filters = _uniform_init(rng, (self.size, self.size, self.c_out, self.c_in), fan_in)
        if self.bias is None:
            self.bias = _uniform_init(rng, (self.c_out,), fan_in)

    def output_shape(self, input_shape):
        if len(input_shape) != 3 or input_shape[2] != self.c_in:
            raise ShapeError(f"deconv layer expects (H, W, {self.c_in}), got {tuple(input_shape)}")
        h, w, _ = input_shape
        return (h + self.size - 1, w + self.size - 1, self.c_out)

    def forward(self, x, ctx):
        z = conv2d_transpose(x, self.filters) + self.bias
        y = self._activate(z)
        return y, (x, z, y)

    def backward_from_z(self, dz, cache):
        x = cache[0]
        h, w = x.shape[1:3]
        df = np.empty_like(self.filters)
        for u in range(self.size):
            for v in range(self.size):
                df[u, v] = np.tensordot(dz[:, u:u + h, v:v + w, :], x, axes=([0, 1, 2], [0, 1, 2]))
        return conv2d_valid(dz, self.filters), {"filters": df, "bias": dz.sum(axis=(0, 1, 2))}


class MaxPool(Layer):
    """2x2 max pooling with stride 2; odd trailing rows/columns are dropped.

    The argmax position of each window is recorded in the forward context
    under ``tag`` so that a matching :class:`MaxUnpool` can scatter back to it.
    Ties go to the first position in row-major window order.
    """

    kind = "maxpool"

    def __init__(self, tag: int = 0):
        self.tag = int(tag)

    def config(self):
        return {"tag": self.tag}

    def output_shape(self, input_shape):
        if len(input_shape) != 3:
            raise ShapeError(f"maxpool expects rank-3 input, got {tuple(input_shape)}")
        h, w, c = input_shape
        if h // 2 == 0 or w // 2 == 0:
            raise ShapeError(f"pooling reduces {h}x{w} to zero size")
        return (h // 2, w // 2, c)

    def forward(self, x, ctx):
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        blocks = x[:, :2 * h2, :2 * w2, :].reshape(n, h2, 2, w2, 2, c)
        blocks = blocks.transpose(0, 1, 3, 5, 2, 4).reshape(n, h2, w2, c, 4)
        arg = blocks.argmax(axis=-1)
        y = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
        ctx.setdefault("switches", {})[self.tag] = arg
        return y, (x.shape, arg)

    def backward(self, dy, cache):
        shape, arg = cache
        return _scatter_blocks(dy, arg, shape), {}


def _scatter_blocks(vals, arg, shape):
    n, h, w, c = shape
    h2, w2 = vals.shape[1:3]
    blocks = np.zeros((n, h2, w2, c, 4))
    np.put_along_axis(blocks, arg[..., None], vals[..., None], axis=-1)
    out = np.zeros(shape)
    out[:, :2 * h2, :2 * w2, :] = (
        blocks.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * h2, 2 * w2, c)
    )
    return out


def _gather_blocks(x, arg):
    n, h2, w2, c = arg.shape
    blocks = x[:, :2 * h2, :2 * w2, :].reshape(n, h2, 2, w2, 2, c)
    blocks = blocks.transpose(0, 1, 3, 5, 2, 4).reshape(n, h2, w2, c, 4)
    return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]


class MaxUnpool(Layer):
    """Max unpooling to ``out_shape`` using the switches of the tagged pool.

    Without recorded switches (a decoder run on its own), each value goes to
    the top-left cell of its 2x2 window.
    """

    kind = "maxunpool"

    def __init__(self, out_shape, tag: int = 0):
        self.out_shape = tuple(int(s) for s in out_shape)
        self.tag = int(tag)

    def config(self):
        return {"out_shape": self.out_shape, "tag": self.tag}

    def output_shape(self, input_shape):
        h, w, c = self.out_shape
        if tuple(input_shape) != (h // 2, w // 2, c):
            raise ShapeError(f"unpool to {self.out_shape} expects {(h // 2, w // 2, c)}, "
                             f"got {tuple(input_shape)}")
        return self.out_shape

    def forward(self, x, ctx):
        arg = ctx.get("switches", {}).get(self.tag)
        if arg is None or arg.shape != x.shape:
            arg = np.zeros(x.shape, dtype=np.int64)
        shape = (x.shape[0],) + self.out_shape
        return _scatter_blocks(x, arg, shape), arg

    def backward(self, dy, cache):
        return _gather_blocks(dy, cache), {}


class Unroll(Layer):
    """H x W x C feature map to a vector (see :func:`embedrate.tensor.unroll`)."""

    kind = "unroll"

    def output_shape(self, input_shape):
        if len(input_shape) != 3:
            raise ShapeError(f"unroll expects rank-3 input, got {tuple(input_shape)}")
        return (int(np.prod(input_shape)),)

    def forward(self, x, ctx):
        return unroll(x), x.shape[1:]

    def backward(self, dy, cache):
        return roll(dy, cache), {}


class Roll(Layer):
    """Vector back to an H x W x C grid; inverse of :class:`Unroll`."""

    kind = "roll"

    def __init__(self, shape):
        self.shape = tuple(int(s) for s in shape)

    def config(self):
        return {"shape": self.shape}

    def output_shape(self, input_shape):
        if tuple(input_shape) != (int(np.prod(self.shape)),):
            raise ShapeError(f"roll to {self.shape} expects length {int(np.prod(self.shape))}, "
                             f"got {tuple(input_shape)}")
        return self.shape

    def forward(self, x, ctx):
        return roll(x, self.shape), None

    def backward(self, dy, cache):
        return unroll(dy), {}


class Recurrent(_Activated):
    """Simple recurrent layer returning the last hidden state.

    ``h_t = g(x_t Wx + bx + h_{t-1} Wh + bh)`` with ``h_0 = 0``. Input has
    shape (n, T, p); output is ``h_T`` of shape (n, hidden).
    """

    kind = "recurrent"

    def __init__(self, n_in: int, hidden: int, activation: str = "tanh",
                 wx=None, bx=None, wh=None, bh=None):
        self.n_in, self.hidden = int(n_in), int(hidden)
        self.activation = _check_activation(activation)
        self.wx = None if wx is None else np.array(wx, dtype=np.float64)
        self.bx = None if bx is None else np.array(bx, dtype=np.float64)
        self.wh = None if wh is None else np.array(wh, dtype=np.float64)
        self.bh = None if bh is None else np.array(bh, dtype=np.float64)

    def param_names(self):
        return ("wx", "bx", "wh", "bh")

    def config(self):
        return {"n_in": self.n_in, "hidden": self.hidden, "activation": self.activation}

    def init(self, rng):
        p, l = self.n_in, self.hidden
        if self.wx is None:
            self.wx = _uniform_init(rng, (p, l), p)
        if self.bx is None:
            self.bx = _uniform_init(rng, (l,), p)
        if self.wh is None:
            self.wh = _uniform_init(rng, (l, l), l)
        if self.bh is None:
            self.bh = _uniform_init(rng, (l,), l)

    def output_shape(self, input_shape):
        if len(input_shape) != 2 or input_shape[1] != self.n_in:
            raise ShapeError(f"recurrent layer expects (T, {self.n_in}), got {tuple(input_shape)}")
        return (self.hidden,)

    def forward(self, x, ctx):
        n, steps, _ = x.shape
        if steps < 1:
            raise ShapeError("recurrent layer needs at least one time step")
        h = np.zeros((n, self.hidden))
        hs, zs, ys = [h], [], []
        for t in range(steps):
            z = x[:, t, :] @ self.wx + self.bx + h @ self.wh + self.bh
            h = self._activate(z)
            zs.append(z)
            hs.append(h)
        return h, (x, hs, zs)

    def backward(self, dy, cache):
        x, hs, zs = cache
        grads = {name: np.zeros_like(getattr(self, name)) for name in self.param_names()}
        dx = np.zeros_like(x)
        dh = dy
        for t in range(x.shape[1] - 1, -1, -1):
            dz = self._dz(dh, zs[t], hs[t + 1])
            grads["wx"] += x[:, t, :].T @ dz
            grads["wh"] += hs[t].T @ dz
            db = dz.sum(axis=0)
            grads["bx"] += db
            grads["bh"] += db
            dx[:, t, :] = dz @ self.wx.T
            dh = dz @ self.wh.T
        return dx, grads


class Scale(Layer):
    """Fixed per-channel standardisation ``(x - mean) / std`` on the last axis.

    Entries of ``std`` equal to 0 mark channels passed through unchanged.
    Not trainable.
    """

    kind = "scale"

    def __init__(self, mean, std):
        self.mean = np.array(mean, dtype=np.float64).reshape(-1)
        self.std = np.array(std, dtype=np.float64).reshape(-1)
        if self.mean.shape != self.std.shape:
            raise ShapeError("mean and std must have the same length")
        self._shift = np.where(self.std == 0, 0.0, self.mean)
        self._div = np.where(self.std == 0, 1.0, self.std)

    def config(self):
        return {"mean": tuple(self.mean), "std": tuple(self.std)}

    def output_shape(self, input_shape):
        if input_shape[-1] != self.mean.size:
            raise ShapeError(f"scale layer expects {self.mean.size} channels, got {input_shape[-1]}")
        return tuple(input_shape)

    def forward(self, x, ctx):
        return (x - self._shift) / self._div, None

    def backward(self, dy, cache):
        return dy / self._div, {}


_LAYER_TYPES = {cls.kind: cls for cls in
                (Dense, Conv, Deconv, MaxPool, MaxUnpool, Unroll, Roll, Recurrent, Scale)}


def _shape_matches(expected, actual):
    return len(expected) == len(actual) and all(e is None or e == a for e, a in zip(expected, actual))


class Network:
    """An ordered list of layers with a loss.

    Parameters
    ----------
    layers : list of Layer
    input_shape : tuple
        Shape of one example. ``None`` marks a free dimension (the time axis
        of a :class:`Recurrent` input).
    loss : {"squared-error", "binary-cross-entropy"}
    seed : int, optional
        Initialise every unset parameter from ``SeededRng(seed)``.

    Ill-formed layer chains raise :class:`ShapeError` here, naming the layer.
    """

    def __init__(self, layers, input_shape, loss="squared-error", seed=None):
        if loss not in LOSSES:
            raise ValueError(f"unknown loss {loss!r}; expected one of {LOSSES}")
        self.layers = list(layers)
        self.input_shape = tuple(None if s is None else int(s) for s in input_shape)
        self.loss = loss
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                probe = tuple(1 if s is None else s for s in shapes[-1])
                out = layer.output_shape(probe)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
            shapes.append(tuple(out))
        self.shapes = shapes
        if seed is not None:
            self.initialize(seed)

    @property
    def output_shape(self):
        return self.shapes[-1]

    def initialize(self, seed):
        rng = SeededRng(seed)
        for layer in self.layers:
            layer.init(rng)
        return self

    def parameters(self):
        """List of ``(layer_index, name, array)`` for every parameter tensor."""
        out = []
        for i, layer in enumerate(self.layers):
            for name in layer.param_names():
                value = getattr(layer, name)
                if value is None:
                    raise ValueError(f"layer {i} parameter {name!r} is not initialised")
                out.append((i, name, value))
        return out

    def n_params(self) -> int:
        return sum(p.size for _, _, p in self.parameters())

    def predict(self, x):
        return forward(self, x).prediction

    def __repr__(self):
        body = ", ".join(repr(layer) for layer in self.layers)
        return f"Network(input_shape={self.input_shape}, loss={self.loss!r}, layers=[{body}])"


class Activations(list):
    """Per-layer outputs from :func:`forward`; the last entry is the prediction.

    Entries drop the batch axis when a single example was passed. The batched
    arrays and layer caches needed by :func:`backward` ride along.
    """

    def __init__(self, outputs, caches, single):
        self.batched = outputs
        self.caches = caches
        self.single = single
        super().__init__(o[0] if single else o for o in outputs)

    @property
    def prediction(self):
        return self[-1]


def _batch_input(net, x):
    x = np.asarray(x, dtype=np.float64)
    ndim = len(net.input_shape)
    if x.ndim == ndim:
        single = True
        xb = x[None]
    elif x.ndim == ndim + 1:
        single = False
        xb = x
    else:
        raise ShapeError(f"layer 0: input shape {x.shape} does not match network input {net.input_shape}")
    if not _shape_matches(net.input_shape, xb.shape[1:]):
        raise ShapeError(f"layer 0: input shape {xb.shape[1:]} does not match network input "
                         f"{net.input_shape}")
    return xb, single


def forward(net: Network, x) -> Activations:
    """Run ``x`` (one example or a batch) through the network."""
    h, single = _batch_input(net, x)
    ctx = {}
    outputs, caches = [], []
    for layer in net.layers:
        h, cache = layer.forward(h, ctx)
        outputs.append(h)
        caches.append(cache)
    return Activations(outputs, caches, single)


def _batched_target(acts, target):
    t = np.asarray(target, dtype=np.float64)
    pred = acts.batched[-1] if acts.batched else None
    if acts.single:
        t = t[None]
    if pred is not None and t.shape != pred.shape:
        raise ShapeError(f"target shape {t.shape} does not match prediction shape {pred.shape}")
    return t


def loss_value(kind, pred, target) -> float:
    """Mean over examples of the per-example summed loss.

    The sum is exactly rounded (``math.fsum``): finite-difference checks
    subtract two nearby losses, and pairwise-summation error would otherwise
    swamp gradients many orders of magnitude below the loss.
    """
    n = pred.shape[0]
    if kind == "squared-error":
        terms = (pred - target) ** 2
    else:
        p = np.clip(pred, _BCE_CLIP, 1.0 - _BCE_CLIP)
        terms = -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))
    return math.fsum(terms.ravel().tolist()) / n


def _loss_grad(kind, pred, target):
    n = pred.shape[0]
    if kind == "squared-error":
        return 2.0 * (pred - target) / n
    p = np.clip(pred, _BCE_CLIP, 1.0 - _BCE_CLIP)
    return (p - target) / (p * (1.0 - p)) / n


def backward(net: Network, acts: Activations, target):
    """Gradients of the loss, one dict ``{name: array}`` per layer."""
    t = _batched_target(acts, target)
    grads = [dict() for _ in net.layers]
    if not net.layers:
        return grads
    pred = acts.batched[-1]
    last = net.layers[-1]
    if (net.loss == "binary-cross-entropy" and hasattr(last, "backward_from_z")
            and last.activation == "sigmoid"):
        # fold the sigmoid derivative into the loss gradient to avoid 0 * inf
        dy = (pred - t) / pred.shape[0]
        fused = True
    else:
        dy = _loss_grad(net.loss, pred, t)
        fused = False
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if fused and i == len(net.layers) - 1:
            dy, grads[i] = layer.backward_from_z(dy, acts.caches[i])
        else:
            dy, grads[i] = layer.backward(dy, acts.caches[i])
    return grads


def _net_loss(net, x, target):
    acts = forward(net, x)
    if not acts.batched:
        return 0.0
    return loss_value(net.loss, acts.batched[-1], _batched_target(acts, target))


@dataclass(frozen=True)
class TrainConfig:
    """SGD settings. ``clip`` caps the global gradient norm when set."""

    learning_rate: float = 0.01
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    shuffle: bool = True
    clip: Optional[float] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError(f"epochs must be a positive integer, got {self.epochs}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError(f"batch_size must be a positive integer, got {self.batch_size}")
        if self.clip is not None and not self.clip > 0:
            raise ValueError("clip must be positive when set")


def _stack_if_uniform(items):
    shapes = {np.shape(item) for item in items}
    return len(shapes) == 1


def dataset_loss(net: Network, inputs, targets) -> float:
    """Mean loss over a dataset (array batch or list of ragged examples)."""
    if isinstance(inputs, np.ndarray):
        return _net_loss(net, inputs, targets)
    total = sum(_net_loss(net, x, t) for x, t in zip(inputs, targets))
    return total / len(inputs)


def sgd_train(net: Network, inputs, targets, cfg: TrainConfig):
    """Train in place with plain mini-batch SGD.

    ``inputs`` is either an array whose leading axis indexes examples, or a
    list of per-example arrays (possibly of different shapes, e.g. sequences
    of varying length); lists are processed example by example and the
    gradients summed in index order.

    Returns ``(net, history)`` where ``history[e]`` is the mean loss over the
    full dataset after epoch ``e``.
    """
    n = len(inputs)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if len(targets) != n:
        raise ValueError(f"{n} inputs but {len(targets)} targets")
    ragged = not isinstance(inputs, np.ndarray)
    if not ragged:
        targets = np.asarray(targets, dtype=np.float64)
    rng = SeededRng(cfg.seed)
    params = net.parameters()
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if ragged:
                grads = None
                for j in idx:
                    g = backward(net, forward(net, inputs[j]), targets[j])
                    if grads is None:
                        grads = g
                    else:
                        for gi, gj in zip(grads, g):
                            for k in gi:
                                gi[k] = gi[k] + gj[k]
                scale = 1.0 / len(idx)
                for gi in grads:
                    for k in gi:
                        gi[k] = gi[k] * scale
            else:
                grads = backward(net, forward(net, inputs[idx]), targets[idx])
            if cfg.clip is not None:
                norm = math.sqrt(sum(float(np.sum(g * g)) for gi in grads for g in gi.values()))
                if norm > cfg.clip:
                    for gi in grads:
                        for k in gi:
                            gi[k] = gi[k] * (cfg.clip / norm)
            for i, name, value in params:
                value -= cfg.learning_rate * grads[i][name]
        history.append(dataset_loss(net, inputs, targets))
    return net, history


def grad_check(net: Network, x, target, epsilon: float = 1e-5, backward_fn=None) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Relative error per parameter entry is
    ``|a - d| / max(1e-8, |a| + |d|)``. ``backward_fn`` substitutes the
    analytic gradient routine (used to test the checker itself).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    params = net.parameters()
    if not params:
        return 0.0
    bwd = backward if backward_fn is None else backward_fn
    analytic = bwd(net, forward(net, x), target)
    worst = 0.0
    for i, name, value in params:
        flat = value.reshape(-1)
        ga = analytic[i][name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            lp = _net_loss(net, x, target)
            flat[j] = orig - epsilon
            lm = _net_loss(net, x, target)
            flat[j] = orig
            num = (lp - lm) / (2.0 * epsilon)
            err = abs(ga[j] - num) / max(1e-8, abs(ga[j]) + abs(num))
            worst = max(worst, err)
    return worst


def extract_embedding(net: Network, layer_index: int, x) -> np.ndarray:
    """Activation of layer ``layer_index`` for a single example, flattened.

    Rank-3 feature maps are flattened in unroll order.
    """
    if not -len(net.layers) <= layer_index < len(net.layers):
        raise IndexError(f"layer index {layer_index} out of range for {len(net.layers)} layers")
    acts = forward(net, x)
    if not acts.single:
        raise ShapeError("extract_embedding takes a single example")
    h = acts[layer_index]
    return unroll(h) if h.ndim == 3 else h.reshape(-1)


# -- text serialisation ------------------------------------------------------

_HEADER = "embedrate-network 1"


def _fmt_shape(shape):
    return " ".join("*" if s is None else str(s) for s in shape)


def _fmt_value(v):
    if isinstance(v, tuple):
        return ",".join(format_float(e) if isinstance(e, float) else str(e) for e in v)
    return str(v)


def network_to_text(net: Network) -> str:
    lines = [_HEADER, f"input_shape {_fmt_shape(net.input_shape)}", f"loss {net.loss}",
             f"layers {len(net.layers)}"]
    for layer in net.layers:
        cfg = " ".join(f"{k}={_fmt_value(v)}" for k, v in layer.config().items())
        lines.append(f"layer {layer.kind} {cfg}".rstrip())
        for name in layer.param_names():
            value = getattr(layer, name)
            lines.append(f"param {name} {_fmt_shape(value.shape)}")
            lines.append(" ".join(format_float(v) for v in value.reshape(-1)))
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_network(net: Network, path) -> None:
    """Write the self-describing text format (17 significant digits)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(network_to_text(net))


def _parse_config_value(key, raw):
    if key in ("activation",):
        return raw
    if key in ("out_shape", "shape"):
        return tuple(int(v) for v in raw.split(","))
    if key in ("mean", "std"):
        return tuple(float(v) for v in raw.split(",")) if raw else ()
    return int(raw)


def network_from_text(text: str) -> Network:
    lines = text.splitlines()
    pos = 0

    def take(prefix):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(f"unexpected end of file, expected {prefix!r}", pos + 1)
        line = lines[pos]
        pos += 1
        if not line.startswith(prefix):
            raise ParseError(f"expected {prefix!r}, got {line[:40]!r}", pos)
        return line[len(prefix):].strip()

    take(_HEADER)
    input_shape = tuple(None if s == "*" else int(s) for s in take("input_shape").split())
    loss = take("loss")
    n_layers = int(take("layers"))
    layers = []
    for _ in range(n_layers):
        fields = take("layer").split()
        kind, cfg = fields[0], {}
        for item in fields[1:]:
            key, _, raw = item.partition("=")
            cfg[key] = _parse_config_value(key, raw)
        if kind not in _LAYER_TYPES:
            raise ParseError(f"unknown layer kind {kind!r}", pos)
        layer = _LAYER_TYPES[kind](**cfg)
        for name in layer.param_names():
            header = take("param").split()
            if header[0] != name:
                raise ParseError(f"expected parameter {name!r}, got {header[0]!r}", pos)
            shape = tuple(int(s) for s in header[1:])
            values = np.array([float(v) for v in take("").split()], dtype=np.float64)
            if values.size != int(np.prod(shape)):
                raise ParseError(f"parameter {name!r} expects {int(np.prod(shape))} values, "
                                 f"got {values.size}", pos)
            setattr(layer, name, values.reshape(shape))
        layers.append(layer)
    take("end")
    return Network(layers, input_shape, loss=loss)


def load_network(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return network_from_text(fh.read())
