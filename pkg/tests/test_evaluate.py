import numpy as np
import pytest

from embedrate.dimred import pca_fit
from embedrate.embeddings import EmbeddingTable, read_embeddings, write_embeddings
from embedrate.errors import DomainError, ParseError
from embedrate.evaluate import ExtrinsicReport, ModelFitError, cosine, extrinsic_compare, nearest_neighbors
from embedrate.glm import GlmFamily
from embedrate.synth import tabular_latent
from embedrate.tensor import SeededRng


def neighbors_oracle(table, query, k):
    """Full scan; sort on (-cosine, position)."""
    q = table[query]
    scored = []
    for pos, key in enumerate(table.ids):
        if key == query:
            continue
        v = table[key]
        scored.append((-(q @ v) / (np.linalg.norm(q) * np.linalg.norm(v)), pos, key))
    return [key for _, _, key in sorted(scored)[:k]]


class TestCosine:
    def test_self(self):
        u = SeededRng(0).normal(7)
        assert cosine(u, u) == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_diagonal(self):
        assert cosine([1.0, 0.0], [1.0, 1.0]) == pytest.approx(0.7071068, abs=1e-7)

    def test_zero_vector(self):
        with pytest.raises(DomainError):
            cosine([0.0, 0.0], [1.0, 2.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_symmetry_and_scale(self, seed):
        rng = SeededRng(seed)
        u, v = rng.normal(6), rng.normal(6)
        assert cosine(u, v) == cosine(v, u)
        assert cosine(3.7 * u, v) == pytest.approx(cosine(u, v), abs=1e-12)
        assert -1.0 <= cosine(u, v) <= 1.0


class TestNearestNeighbors:
    def test_hand_case(self):
        table = EmbeddingTable(["a", "b", "c"], [[1.0, 0.0], [1.0, 0.01], [0.0, 1.0]])
        report = nearest_neighbors(table, "a", 2)
        assert [k for k, _ in report.neighbors] == ["b", "c"]

    def test_full_ranking(self):
        table = EmbeddingTable(list("pqrst"), SeededRng(1).normal((5, 3)))
        assert len(nearest_neighbors(table, "r", 4).neighbors) == 4

    def test_duplicate_vectors_tie_break(self):
        table = EmbeddingTable(["q", "z", "y", "x"], [[1.0, 1.0], [2.0, 0.0], [2.0, 0.0], [2.0, 0.0]])
        assert [k for k, _ in nearest_neighbors(table, "q", 3).neighbors] == ["z", "y", "x"]

    def test_zero_vector_named(self):
        table = EmbeddingTable(["a", "b", "c"], [[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DomainError, match="'b'"):
            nearest_neighbors(table, "a", 1)

    def test_unknown_and_k(self):
        table = EmbeddingTable(["a", "b"], [[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(KeyError):
            nearest_neighbors(table, "zz", 1)
        with pytest.raises(ValueError):
            nearest_neighbors(table, "a", 2)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_full_scan(self, seed):
        rng = SeededRng(seed)
        n = 30
        vectors = rng.normal((n, 4))
        vectors[5] = vectors[7]  # force an exact tie
        table = EmbeddingTable([f"id{i}" for i in range(n)], vectors)
        query = f"id{rng.integers(n)}"
        report = nearest_neighbors(table, query, 10)
        assert [k for k, _ in report.neighbors] == neighbors_oracle(table, query, 10)
        values = [v for _, v in report.neighbors]
        assert values == sorted(values, reverse=True)

    def test_report_formats(self):
        table = EmbeddingTable(["a", "b", "c"], [[1.0, 0.0], [1.0, 0.01], [0.0, 1.0]])
        report = nearest_neighbors(table, "a", 2)
        kv = report.to_text(machine=True).splitlines()
        assert kv[:2] == ["query:a", "k:2"]
        assert kv[2].startswith("neighbor.1:b ")
        assert "neighbor.1" in report.to_text()


class TestExtrinsic:
    def data(self, seed=0):
        d = tabular_latent(n=600, seed=seed)
        return d, pca_fit(d["emerging"], 2).encode(d["emerging"])

    def test_identical_models(self):
        d, _ = self.data()
        blocks = [("rating", d["rating"])]
        report = extrinsic_compare(blocks, blocks, d["y"], GlmFamily("poisson"), seed=1)
        assert report.delta == pytest.approx(0.0, abs=1e-10)

    def test_delta_definition(self):
        report = ExtrinsicReport(10.0, 7.5)
        assert report.delta == 2.5

    def test_noise_column_small_effect(self):
        d, _ = self.data()
        noise = SeededRng(99).normal(d["y"].size)
        base = [("rating", d["rating"])]
        report = extrinsic_compare(base, base + [("noise", noise)], d["y"], GlmFamily("poisson"))
        assert abs(report.delta) < 0.02 * report.baseline_deviance

    def test_planted_signal(self):
        d, codes = self.data()
        base = [("rating", d["rating"])]
        report = extrinsic_compare(base, base + [("pca", codes)], d["y"], GlmFamily("poisson"), seed=3)
        assert report.delta > 0

    def test_folds(self):
        d, codes = self.data()
        base = [("rating", d["rating"])]
        report = extrinsic_compare(base, base + [("pca", codes)], d["y"], GlmFamily("poisson"), folds=4)
        assert len(report.folds) == 4
        assert report.baseline_deviance == pytest.approx(sum(b for b, _ in report.folds))
        assert "fold.3.augmented:" in report.to_text(machine=True)

    def test_failure_labelled(self):
        x = SeededRng(0).normal(50)
        y = (x > 0).astype(float)  # perfectly separable
        with pytest.raises(ModelFitError) as err:
            extrinsic_compare([], [("x", x)], y, GlmFamily("binomial"))
        assert err.value.which == "augmented"

    def test_train_fraction_range(self):
        d, _ = self.data()
        with pytest.raises(ValueError):
            extrinsic_compare([], [], d["y"], GlmFamily("poisson"), train_fraction=1.0)


class TestEmbeddingFile:
    def test_round_trip_bit_exact(self, tmp_path):
        table = EmbeddingTable([f"r{i}" for i in range(10)], SeededRng(4).normal((10, 4)))
        write_embeddings(table, tmp_path / "t.emb")
        back = read_embeddings(tmp_path / "t.emb")
        assert back == table
        np.testing.assert_array_equal(back.vectors, table.vectors)
        write_embeddings(back, tmp_path / "u.emb")
        assert (tmp_path / "u.emb").read_bytes() == (tmp_path / "t.emb").read_bytes()

    def test_row_width_error_has_line(self, tmp_path):
        (tmp_path / "bad.emb").write_text("3 2\na 1 2\nb 1 2 3\nc 1 2\n")
        with pytest.raises(ParseError) as err:
            read_embeddings(tmp_path / "bad.emb")
        assert err.value.line == 3

    def test_empty_table(self, tmp_path):
        (tmp_path / "e.emb").write_text("0 5\n")
        table = read_embeddings(tmp_path / "e.emb")
        assert len(table) == 0 and table.dim == 5
        write_embeddings(table, tmp_path / "f.emb")
        assert (tmp_path / "f.emb").read_text() == "0 5\n"

    def test_bad_header(self, tmp_path):
        (tmp_path / "h.emb").write_text("three 2\n")
        with pytest.raises(ParseError) as err:
            read_embeddings(tmp_path / "h.emb")
        assert err.value.line == 1

    def test_duplicate_ids(self):
        with pytest.raises(ValueError):
            EmbeddingTable(["a", "a"], [[1.0], [2.0]])
