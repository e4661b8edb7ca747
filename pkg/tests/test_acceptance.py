"""Acceptance criteria, one test per criterion.

Each test prints a ``criterion N: PASS|FAIL`` line (with the measured
quantities and wall time) straight to the terminal, then asserts.
"""

import itertools
import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from embedrate.autoencode import AutoencoderSpec, ae_fit, build_autoencoder
from embedrate.dimred import pca_decode, pca_encode, pca_fit, reconstruction_error
from embedrate.embeddings import EmbeddingTable
from embedrate.evaluate import cosine, extrinsic_compare, nearest_neighbors
from embedrate.geo import (
    GeoPointSet,
    attach_features,
    build_cuboids,
    crae_embed,
    crae_fit,
    smoothness_score,
    span_grid,
)
from embedrate.glm import GlmFamily, glm_fit
from embedrate.nn import Conv, Dense, MaxPool, Network, Recurrent, TrainConfig, Unroll, forward, grad_check
from embedrate.pipeline import file_checksum, load_config, run_pipeline
from embedrate.sequence import many_to_one_fit, rnn_forward, sequence_embed
from embedrate.synth import _poisson, cluster_corpus, marker_sequences, smooth_geo_field, tabular_latent
from embedrate.tensor import SeededRng, conv2d_valid
from embedrate.text import build_vocab, word2vec_train

REFERENCE = Path(__file__).resolve().parents[1] / "pipelines" / "reference.ini"


@pytest.fixture
def report(capsys):
    """Print one verdict line per criterion, bypassing output capture."""
    start = time.perf_counter()

    def emit(number, ok, detail, limit=None):
        elapsed = time.perf_counter() - start
        within = limit is None or elapsed < limit
        verdict = "PASS" if ok and within else "FAIL"
        budget = f" (limit {limit:g}s)" if limit is not None else ""
        with capsys.disabled():
            print(f"\ncriterion {number}: {verdict} - {detail}; {elapsed:.2f}s{budget}")
        assert ok, detail
        assert within, f"took {elapsed:.1f}s, limit {limit}s"

    return emit


def cluster_gap(table):
    a = [t for t in table.ids if t.startswith("a")]
    b = [t for t in table.ids if t.startswith("b")]
    within = [cosine(table[x], table[y]) for g in (a, b) for x, y in itertools.combinations(g, 2)]
    between = [cosine(table[x], table[y]) for x in a for y in b]
    return float(np.mean(within) - np.mean(between))


def conv_loop(x, f):
    h, w, c = x.shape
    size, _, _, k = f.shape
    out = np.zeros((h - size + 1, w - size + 1, k))
    for i, j, kk in itertools.product(range(out.shape[0]), range(out.shape[1]), range(k)):
        out[i, j, kk] = sum(x[i + u, j + v, cc] * f[u, v, cc, kk]
                            for u in range(size) for v in range(size) for cc in range(c))
    return out


def attach_scan(cells, pts):
    q = cells.shape[0]
    out = np.zeros((q, q, pts.p + 1))
    for i, j in itertools.product(range(q), range(q)):
        d = [float(np.sum((cells[i, j] - pts.coords[k]) ** 2)) for k in range(len(pts))]
        out[i, j, :pts.p] = pts.features[d.index(min(d))]
        out[i, j, -1] = 1.0
    return out


def neighbor_scan(table, query, k):
    q = table[query]
    scored = sorted((-cosine(q, table[key]), pos, key) for pos, key in enumerate(table.ids) if key != query)
    return [key for _, _, key in scored[:k]]


def test_criterion_1_gradient_fidelity(report):
    errors = {"dense": [], "conv+pool": [], "rnn": [], "conv-ae": []}
    for seed in range(10):
        rng = SeededRng(1000 + seed)
        net = Network([Dense(5, 4, "tanh"), Dense(4, 3, "sigmoid"), Dense(3, 2, "identity")], (5,), seed=seed)
        errors["dense"].append(grad_check(net, rng.normal(5), rng.normal(2)))
        net = Network([Conv(3, 2, 3, "tanh"), MaxPool(0), Unroll(), Dense(12, 2, "identity")], (6, 6, 2),
                      seed=seed)
        errors["conv+pool"].append(grad_check(net, rng.normal((6, 6, 2)), rng.normal(2)))
        net = Network([Recurrent(2, 3, "tanh"), Dense(3, 1, "sigmoid")], (None, 2),
                      loss="binary-cross-entropy", seed=seed)
        errors["rnn"].append(grad_check(net, rng.normal((1 + seed % 6, 2)), np.array([float(seed % 2)])))
        net, _, _ = build_autoencoder(AutoencoderSpec.default_conv((8, 8, 1), 3), seed=seed)
        x = rng.uniform((8, 8, 1))
        errors["conv-ae"].append(grad_check(net, x, x))
    worst = {k: max(v) for k, v in errors.items()}
    detail = ", ".join(f"{k} max {v:.1e} over {len(errors[k])}" for k, v in worst.items())
    report(1, max(worst.values()) <= 1e-4, detail, limit=30)


def test_criterion_2_pca_identities(report):
    n, p = 100, 10
    x = SeededRng(2).normal((n, p))
    centred = x - x.mean(axis=0)
    population = np.sort(np.linalg.eigvalsh(centred.T @ centred / n))[::-1]  # independent oracle
    ortho, rel = 0.0, 0.0
    for dim in range(1, p):
        m = pca_fit(x, dim)
        ortho = max(ortho, float(np.max(np.abs(m.components.T @ m.components - np.eye(dim)))))
        err = reconstruction_error(lambda a: pca_encode(m, a), lambda z: pca_decode(m, z), x)
        expected = n * population[dim:].sum()
        rel = max(rel, abs(err - expected) / expected)
    full = pca_fit(x, p)
    full_err = reconstruction_error(lambda a: pca_encode(full, a), lambda z: pca_decode(full, z), x)
    ok = ortho <= 1e-8 and rel <= 1e-6 and full_err <= 1e-10
    report(2, ok, f"orthonormality {ortho:.1e}, error identity rel {rel:.1e}, full-rank error {full_err:.1e}",
           limit=5)


def test_criterion_3_linear_ae_matches_pca(report):
    x = SeededRng(3).normal((100, 10))
    m = pca_fit(x, 3)
    optimum = reconstruction_error(lambda a: pca_encode(m, a), lambda z: pca_decode(m, z), x)
    spec = AutoencoderSpec((10,), 3, hidden_activation="identity")
    enc, dec, _ = ae_fit(x, spec, TrainConfig(learning_rate=0.02, epochs=2000, batch_size=100))
    err = reconstruction_error(lambda a: forward(enc, a).prediction, lambda z: forward(dec, z).prediction, x)
    gap = err / optimum - 1.0
    report(3, gap <= 0.05, f"AE error {err:.4f} vs PCA {optimum:.4f} ({gap:+.2e} relative)", limit=60)


def test_criterion_4_glm_oracles(report):
    rng = SeededRng(4)
    X = np.column_stack([np.ones(80), rng.normal((80, 3))])
    y = X @ np.array([0.5, 1.0, -1.0, 2.0]) + rng.normal(80)
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    ols_err = float(np.max(np.abs(glm_fit(X, y, GlmFamily("gaussian")).coefficients - ols)))

    counts = _poisson(rng, np.full(60, 2.5))
    b0 = glm_fit(np.ones((60, 1)), counts, GlmFamily("poisson")).coefficients[0]
    b0_err = abs(b0 - math.log(counts.mean()))

    X = np.column_stack([np.ones(300), rng.normal((300, 2))])
    y = _poisson(rng, np.exp(X @ np.array([0.1, 0.4, -0.3])))
    model = glm_fit(X, y, GlmFamily("poisson"))

    def loglik(beta):
        eta = X @ beta
        return float(np.sum(y * eta - np.exp(eta)))

    h, k = 1e-4, X.shape[1]
    hess = np.zeros((k, k))
    for i, j in itertools.product(range(k), range(k)):
        e_i, e_j = np.eye(k)[i] * h, np.eye(k)[j] * h
        b = model.coefficients
        hess[i, j] = (loglik(b + e_i + e_j) - loglik(b + e_i - e_j) - loglik(b - e_i + e_j)
                      + loglik(b - e_i - e_j)) / (4 * h * h)
    se_numeric = np.sqrt(np.diag(np.linalg.inv(-hess)))
    se_rel = float(np.max(np.abs(model.std_errors / se_numeric - 1)))
    ok = ols_err <= 1e-8 and b0_err <= 1e-6 and se_rel <= 1e-4
    report(4, ok, f"OLS max diff {ols_err:.1e}, ln(mean) diff {b0_err:.1e}, SE rel {se_rel:.1e}", limit=10)


def test_criterion_5_word2vec_separation(report):
    docs = cluster_corpus(n_docs=2000, vocab_size=20, seed=5)
    vocab = build_vocab(docs)
    cfg = TrainConfig(learning_rate=0.025, epochs=5, batch_size=64, seed=5)
    gaps, identical = {}, True
    for mode in ("cbow", "skipgram"):
        table = word2vec_train(docs, vocab, mode, window=2, dim=16, negatives=5, cfg=cfg)
        again = word2vec_train(docs, vocab, mode, window=2, dim=16, negatives=5, cfg=cfg)
        identical &= bool(np.array_equal(table.vectors, again.vectors))
        gaps[mode] = cluster_gap(table)
    ok = min(gaps.values()) >= 0.2 and identical
    detail = ", ".join(f"{m} gap {g:.3f}" for m, g in gaps.items()) + f", reruns bit-identical: {identical}"
    report(5, ok, detail, limit=120)


def test_criterion_6_crae_smoothness(report):
    pts = smooth_geo_field(n=500, p=4, seed=6)
    cubes = build_cuboids(pts, q=9)
    dim = 2
    encoder = crae_fit(cubes, dim, cfg=TrainConfig(learning_rate=0.002, epochs=40, batch_size=16, seed=6))
    crae_table = EmbeddingTable(pts.ids, np.array([crae_embed(encoder, c) for c in cubes]))
    pca_table = EmbeddingTable(pts.ids, pca_encode(pca_fit(pts.features, dim), pts.features))
    s_crae = smoothness_score(crae_table, pts.coords, k=5)
    s_pca = smoothness_score(pca_table, pts.coords, k=5)
    report(6, s_crae > s_pca, f"smoothness CRAE {s_crae:.4f} vs per-point PCA {s_pca:.4f}", limit=180)


def test_criterion_7_extrinsic_lift(report):
    deltas = []
    for seed in range(5):
        d = tabular_latent(n=2000, seed=seed)
        codes = pca_fit(d["emerging"], 2).encode(d["emerging"])
        base = [("rating", d["rating"])]
        result = extrinsic_compare(base, base + [("pca", codes)], d["y"], GlmFamily("poisson"), seed=seed)
        deltas.append(result.delta)
    ok = all(delta > 0 for delta in deltas)
    report(7, ok, "holdout deviance deltas " + ", ".join(f"{v:.2f}" for v in deltas), limit=60)


def test_criterion_8_many_to_one_rnn(report):
    seqs, labels = marker_sequences(n=200, max_len=10, seed=8)
    params = many_to_one_fit(seqs, labels, TrainConfig(learning_rate=0.1, epochs=100, batch_size=8, seed=8),
                             hidden=8)
    preds = np.array([rnn_forward(s, params)[1][-1, 0] for s in seqs])
    accuracy = float(np.mean((preds > 0.5) == (labels == 1)))
    lengths = {len(s) for s in seqs}
    widths = {sequence_embed(s, params).shape for s in seqs}
    ok = accuracy >= 0.95 and widths == {(8,)} and len(lengths) > 1
    report(8, ok, f"training accuracy {accuracy:.3f}, lengths {min(lengths)}..{max(lengths)}, "
                  f"embedding shapes {sorted(widths)}", limit=120)


def test_criterion_9_end_to_end_determinism(report, tmp_path):
    runs = []
    for name in ("a", "b"):
        root = tmp_path / name
        root.mkdir()
        shutil.copy(REFERENCE, root / "reference.ini")
        manifest = run_pipeline(load_config(root / "reference.ini"))
        files = sorted(p for sub in ("emb", "models") for p in (root / "out" / sub).iterdir())
        runs.append((manifest.checksums(), {p.relative_to(root): file_checksum(p) for p in files}))
        manifest_file = (root / "out" / "run.manifest").read_text().splitlines()
        runs[-1] += ([line for line in manifest_file if ".seconds:" not in line],)
    (sums_a, files_a, text_a), (sums_b, files_b, text_b) = runs
    ok = sums_a == sums_b and files_a == files_b and text_a == text_b and len(files_a) >= 10
    report(9, ok, f"{len(files_a)} embedding/model files and {len(sums_a)} manifest checksums "
                  f"identical: {ok}")


def test_criterion_10_bruteforce_equivalences(report):
    conv_err, nn_mismatch, attach_mismatch = 0.0, 0, 0
    for seed in range(10):
        rng = SeededRng(10_000 + seed)
        h, w, c, k, f = 4 + seed % 4, 5 + seed % 3, 1 + seed % 3, 1 + seed % 2, 1 + seed % 3
        x, filt = rng.normal((h, w, c)), rng.normal((f, f, c, k))
        conv_err = max(conv_err, float(np.max(np.abs(conv2d_valid(x, filt) - conv_loop(x, filt)))))

        vectors = rng.normal((25, 3))
        vectors[3] = vectors[11]  # exact tie
        table = EmbeddingTable([f"v{i}" for i in range(25)], vectors)
        query = f"v{rng.integers(25)}"
        got = [key for key, _ in nearest_neighbors(table, query, 24).neighbors]
        nn_mismatch += got != neighbor_scan(table, query, 24)

        coords = rng.integers(5, (20, 2)).astype(float) if seed % 2 else rng.uniform((20, 2), -2, 2)
        pts = GeoPointSet([f"p{i}" for i in range(20)], coords, rng.normal((20, 2)), [])
        grid = span_grid(rng.uniform(2, 0, 4), 7, 0.5)
        attach_mismatch += not np.array_equal(attach_features(grid, pts).values, attach_scan(grid.cells, pts))
    ok = conv_err <= 1e-12 and nn_mismatch == 0 and attach_mismatch == 0
    report(10, ok, f"conv max diff {conv_err:.1e}, neighbour mismatches {nn_mismatch}/10, "
                   f"attach mismatches {attach_mismatch}/10")
