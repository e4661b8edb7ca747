"""Tokens, vocabularies, word2vec embeddings and document centroids."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingTable
from .errors import DomainError
from .nn import TrainConfig
from .tensor import SeededRng

__all__ = [
    "one_hot",
    "tokenize",
    "read_corpus",
    "Vocabulary",
    "build_vocab",
    "word2vec_train",
    "doc_centroid",
]

_TOKEN = re.compile(r"[^\W_]+")


def one_hot(j: int, k: int) -> np.ndarray:
    """Length-``k`` vector with a single 1 at (1-based) position ``j``."""
    if not 1 <= j <= k:
        raise IndexError(f"category {j} out of range 1..{k}")
    e = np.zeros(k)
    e[j - 1] = 1.0
    return e


def tokenize(text: str) -> list:
    """Lowercase, then split on runs of non-alphanumeric characters."""
    return _TOKEN.findall(text.lower())


def read_corpus(path, tokenized: bool = False) -> list:
    """One document per line. With ``tokenized`` lines are split on whitespace only."""
    with open(path, encoding="utf-8") as fh:
        return [line.split() if tokenized else tokenize(line) for line in fh.read().splitlines()]


@dataclass(frozen=True)
class Vocabulary:
    """Word types indexed 0..|V|-1 by decreasing count, ties alphabetical."""

    tokens: tuple
    counts: tuple
    total_tokens: int

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def index(self, token) -> int:
        return self._index[token]

    def encode(self, doc) -> list:
        """Indices of the in-vocabulary tokens of ``doc``."""
        return [self._index[t] for t in doc if t in self._index]


def build_vocab(corpus, min_count: int = 1) -> Vocabulary:
    """Count word types; drop those seen fewer than ``min_count`` times.

    ``total_tokens`` counts every token of the corpus, retained or not.
    """
    if min_count < 1:
        raise ValueError("min_count must be at least 1")
    counts = Counter(t for doc in corpus for t in doc)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    if not kept:
        raise ValueError("vocabulary is empty after min_count filtering")
    return Vocabulary(tuple(kept), tuple(counts[t] for t in kept), sum(counts.values()))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def _skipgram_examples(docs, window):
    centers, contexts = [], []
    for doc in docs:
        n = len(doc)
        for i, c in enumerate(doc):
            for j in range(max(0, i - window), min(n, i + window + 1)):
                if j != i:
                    centers.append(c)
                    contexts.append(doc[j])
    return np.array(centers, dtype=np.int64), np.array(contexts, dtype=np.int64)


def _cbow_examples(docs, window):
    targets, contexts = [], []
    width = 2 * window
    for doc in docs:
        n = len(doc)
        for i, c in enumerate(doc):
            ctx = [doc[j] for j in range(max(0, i - window), min(n, i + window + 1)) if j != i]
            if ctx:
                targets.append(c)
                contexts.append(ctx + [-1] * (width - len(ctx)))
    return (np.array(targets, dtype=np.int64),
            np.array(contexts, dtype=np.int64).reshape(-1, width))


def word2vec_train(corpus, vocab: Vocabulary, mode: str = "skipgram", window: int = 2,
                   dim: int = 50, negatives: int = 5, cfg: TrainConfig = None,
                   history: list = None) -> EmbeddingTable:
    """Train word vectors with negative sampling.

    ``mode`` is ``"cbow"`` (the averaged context predicts the centre word) or
    ``"skipgram"`` (the centre word predicts each context word). Noise words
    are drawn from the unigram distribution raised to the power 0.75; a noise
    draw equal to the true word is ignored. The window is symmetric and cut
    at document boundaries.

    Gradients are summed over each mini-batch, so ``cfg.learning_rate`` acts
    per training pair as in the classic word2vec update. The returned rows
    are the input-side weight matrix. If ``history`` is a list, the mean
    negative-sampling loss of each epoch is appended to it.
    """
    cfg = cfg or TrainConfig(learning_rate=0.025, epochs=5, batch_size=64)
    if mode not in ("cbow", "skipgram"):
        raise ValueError(f"mode must be 'cbow' or 'skipgram', got {mode!r}")
    if window < 1:
        raise ValueError("window must be at least 1")
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    if len(vocab) < negatives + 1:
        raise ValueError(f"vocabulary of {len(vocab)} words is too small for {negatives} negatives")
    rng = SeededRng(cfg.seed)
    v = len(vocab)
    w_in = rng.uniform((v, dim), -0.5 / dim, 0.5 / dim)
    w_out = np.zeros((v, dim))
    noise = np.cumsum(np.asarray(vocab.counts, dtype=np.float64) ** 0.75)

    docs = [vocab.encode(doc) for doc in corpus]
    if mode == "skipgram":
        inputs, targets = _skipgram_examples(docs, window)
    else:
        targets, inputs = _cbow_examples(docs, window)
    m = len(targets)
    if m == 0:
        raise ValueError("corpus yields no training pairs")
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        order = rng.permutation(m) if cfg.shuffle else np.arange(m)
        total = 0.0
        for start in range(0, m, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            tgt = targets[idx]
            negs = rng.choice_cdf(noise, (idx.size, negatives))
            keep = (negs != tgt[:, None]).astype(np.float64)
            if mode == "skipgram":
                ctr = inputs[idx]
                h = w_in[ctr]
            else:
                ctx = inputs[idx]
                valid = (ctx >= 0).astype(np.float64)
                count = valid.sum(axis=1, keepdims=True)
                h = (w_in[np.maximum(ctx, 0)] * valid[..., None]).sum(axis=1) / count
            u_pos = w_out[tgt]
            u_neg = w_out[negs]
            s_pos = np.einsum("bd,bd->b", h, u_pos)
            s_neg = np.einsum("bd,bkd->bk", h, u_neg)
            total -= float(np.sum(_log_sigmoid(s_pos)) + np.sum(keep * _log_sigmoid(-s_neg)))
            g_pos = _sigmoid(s_pos) - 1.0
            g_neg = _sigmoid(s_neg) * keep
            dh = g_pos[:, None] * u_pos + np.einsum("bk,bkd->bd", g_neg, u_neg)
            np.add.at(w_out, tgt, -lr * g_pos[:, None] * h)
            np.add.at(w_out, negs, -lr * g_neg[..., None] * h[:, None, :])
            if mode == "skipgram":
                np.add.at(w_in, ctr, -lr * dh)
            else:
                share = (-lr * dh / count)[:, None, :] * valid[..., None]
                np.add.at(w_in, np.maximum(ctx, 0), share)
        if history is not None:
            history.append(total / m)
    return EmbeddingTable(list(vocab.tokens), w_in, dim)


def doc_centroid(doc, table: EmbeddingTable, vocab: Vocabulary = None) -> np.ndarray:
    """Mean embedding of the document's known tokens.

    Tokens missing from the vocabulary (or from the table) are skipped and do
    not count towards the document length.
    """
    rows = [table[t] for t in doc if (vocab is None or t in vocab) and t in table]
    if not rows:
        raise DomainError("document has no in-vocabulary token")
    return np.mean(rows, axis=0)
