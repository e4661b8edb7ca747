"""Simple recurrent network: state updates, many-to-one training, embeddings.

The hidden state follows ``h_t = g_h(x_t Wx + bx + h_{t-1} Wh + bh)`` from
``h_0 = 0`` and the output is ``o_t = g_o(h_t Wo + bo)``. The embedding of a
sequence is its final hidden state ``h_T``, whose length does not depend on T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ShapeError
from .nn import ACTIVATIONS, Dense, Network, Recurrent, TrainConfig, format_float, sgd_train

__all__ = [
    "RnnParams",
    "rnn_step",
    "rnn_forward",
    "sequence_embed",
    "many_to_one_fit",
    "read_sequences",
    "write_sequences",
]


@dataclass(frozen=True)
class RnnParams:
    wx: np.ndarray  # p x l
    bx: np.ndarray
    wh: np.ndarray  # l x l
    bh: np.ndarray
    wo: np.ndarray  # l x J
    bo: np.ndarray
    hidden_activation: str = "tanh"
    output_activation: str = "sigmoid"

    def __post_init__(self):
        for name in ("wx", "bx", "wh", "bh", "wo", "bo"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        p, l = self.wx.shape
        j = self.wo.shape[1] if self.wo.ndim == 2 else -1
        if (self.bx.shape != (l,) or self.wh.shape != (l, l) or self.bh.shape != (l,)
                or self.wo.shape != (l, j) or self.bo.shape != (j,)):
            raise ShapeError("inconsistent RNN parameter shapes: "
                             f"wx {self.wx.shape}, bx {self.bx.shape}, wh {self.wh.shape}, "
                             f"bh {self.bh.shape}, wo {self.wo.shape}, bo {self.bo.shape}")
        for act in (self.hidden_activation, self.output_activation):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    @property
    def n_in(self) -> int:
        return self.wx.shape[0]

    @property
    def hidden(self) -> int:
        return self.wx.shape[1]

    @property
    def n_out(self) -> int:
        return self.wo.shape[1]

    @classmethod
    def zeros(cls, p, hidden, n_out=1, hidden_activation="tanh", output_activation="sigmoid"):
        return cls(np.zeros((p, hidden)), np.zeros(hidden), np.zeros((hidden, hidden)),
                   np.zeros(hidden), np.zeros((hidden, n_out)), np.zeros(n_out),
                   hidden_activation, output_activation)

    def to_network(self, loss="binary-cross-entropy") -> Network:
        layers = [
            Recurrent(self.n_in, self.hidden, self.hidden_activation,
                      self.wx.copy(), self.bx.copy(), self.wh.copy(), self.bh.copy()),
            Dense(self.hidden, self.n_out, self.output_activation, self.wo.copy(), self.bo.copy()),
        ]
        return Network(layers, (None, self.n_in), loss=loss)

    @classmethod
    def from_network(cls, net: Network) -> "RnnParams":
        rec, out = net.layers
        return cls(rec.wx.copy(), rec.bx.copy(), rec.wh.copy(), rec.bh.copy(),
                   out.weights.copy(), out.bias.copy(), rec.activation, out.activation)


def _steps(seq, p):
    x = np.asarray(seq, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None] if p == 1 else x[None, :]
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError("a sequence needs at least one step")
    if x.shape[1] != p:
        raise ShapeError(f"sequence steps have length {x.shape[1]}, parameters expect {p}")
    return x


def rnn_step(x_t, h_prev, params: RnnParams) -> np.ndarray:
    """One state update."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x_t.shape != (params.n_in,) or h_prev.shape != (params.hidden,):
        raise ShapeError(f"rnn_step expects x of length {params.n_in} and h of length "
                         f"{params.hidden}, got {x_t.shape} and {h_prev.shape}")
    z = x_t @ params.wx + params.bx + h_prev @ params.wh + params.bh
    return ACTIVATIONS[params.hidden_activation][0](z)


def rnn_forward(seq, params: RnnParams, h0=None):
    """All hidden states and outputs, each of shape (T, .)."""
    x = _steps(seq, params.n_in)
    h = np.zeros(params.hidden) if h0 is None else np.asarray(h0, dtype=np.float64)
    hs = []
    for x_t in x:
        h = rnn_step(x_t, h, params)
        hs.append(h)
    hs = np.array(hs)
    outs = ACTIVATIONS[params.output_activation][0](hs @ params.wo + params.bo)
    return hs, outs


def sequence_embed(seq, params: RnnParams) -> np.ndarray:
    """The last hidden state ``h_T`` (started from zeros)."""
    hs, _ = rnn_forward(seq, params)
    return hs[-1]


def many_to_one_fit(seqs, labels, cfg: TrainConfig, hidden: int, n_out: int = 1,
                    loss: str = "binary-cross-entropy", hidden_activation: str = "tanh",
                    output_activation: str = None, history: list = None) -> RnnParams:
    """Train on whole sequences by backpropagation through time.

    Only the output at the last step enters the loss. Sequences may have
    different lengths; each mini-batch of ``cfg.batch_size`` sequences is
    processed one sequence at a time. Parameters are initialised from
    ``cfg.seed``.
    """
    if len(seqs) == 0:
        raise ValueError("cannot train on an empty dataset")
    if len(seqs) != len(labels):
        raise ValueError(f"{len(seqs)} sequences but {len(labels)} labels")
    y = np.asarray(labels, dtype=np.float64).reshape(len(labels), -1)
    if y.shape[1] != n_out:
        raise ShapeError(f"labels have width {y.shape[1]}, expected {n_out}")
    if loss == "binary-cross-entropy":
        if np.any((y != 0) & (y != 1)):
            raise ValueError("binary-cross-entropy needs 0/1 labels")
        output_activation = output_activation or "sigmoid"
    else:
        output_activation = output_activation or "identity"
    p = np.asarray(seqs[0], dtype=np.float64).reshape(len(seqs[0]), -1).shape[1]
    xs = [_steps(s, p)[None] for s in seqs]
    net = Network([Recurrent(p, hidden, hidden_activation), Dense(hidden, n_out, output_activation)],
                  (None, p), loss=loss, seed=cfg.seed)
    targets = [row[None] for row in y]
    _, hist = sgd_train(net, xs, targets, cfg)
    if history is not None:
        history.extend(hist)
    return RnnParams.from_network(net)


def read_sequences(path):
    """Parse a sequence file.

    One record per line: steps separated by ``;``, components by ``,`` and an
    optional trailing ``|label``. Returns ``(sequences, labels)`` where
    ``labels`` is None when no line carries one.
    """
    seqs, labels = [], []
    p = None
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            body, bar, label = line.partition("|")
            try:
                steps = [[float(v) for v in step.split(",")] for step in body.split(";")]
            except ValueError as exc:
                raise ParseError(str(exc), no) from None
            widths = {len(s) for s in steps}
            if len(widths) != 1 or (p is not None and widths != {p}):
                raise ParseError("all steps must have the same number of components", no)
            p = widths.pop()
            seqs.append(np.array(steps))
            labels.append(float(label) if bar else None)
    if any(lab is None for lab in labels):
        if any(lab is not None for lab in labels):
            raise ParseError("either every record or no record must carry a label")
        return seqs, None
    return seqs, np.array(labels)


def write_sequences(path, seqs, labels=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, seq in enumerate(seqs):
            x = np.asarray(seq, dtype=np.float64)
            body = ";".join(",".join(format_float(v) for v in step) for step in x)
            if labels is not None:
                body += "|" + format_float(labels[i])
            fh.write(body + "\n")
