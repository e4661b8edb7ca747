import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedrate.dimred import (
    jacobi_eigh,
    load_pca,
    pca_decode,
    pca_encode,
    pca_fit,
    reconstruction_error,
    save_pca,
    standardize,
)
from embedrate.errors import ShapeError
from embedrate.tensor import SeededRng


def eq2_bruteforce(model, x):
    """Double loop over rows and columns of the squared reconstruction error."""
    total = 0.0
    for row in x:
        rec = model.mean + model.components @ (model.components.T @ (row - model.mean))
        for j in range(x.shape[1]):
            total += (rec[j] - row[j]) ** 2
    return total


class TestStandardize:
    def test_fixed_point(self):
        col = np.array([-1.0, 1.0, -1.0, 1.0])
        z, _, _ = standardize(col[:, None])
        np.testing.assert_allclose(z[:, 0], col, atol=1e-12)

    def test_population_convention(self):
        z, mean, std = standardize(np.array([[0.0], [10.0]]))
        np.testing.assert_array_equal(z[:, 0], [-1.0, 1.0])
        assert mean[0] == 5.0 and std[0] == 5.0

    def test_constant_column(self):
        z, _, std = standardize(np.array([[3.0, 1.0], [3.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(z[:, 0], 0.0)
        assert std[0] == 1.0

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            standardize(np.ones((1, 3)))

    def test_moments(self):
        z, _, _ = standardize(SeededRng(1).normal((40, 5), 3.0, 7.0))
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-12)


class TestJacobi:
    @pytest.mark.parametrize("seed", range(4))
    def test_matches_numpy(self, seed):
        a = SeededRng(seed).normal((6, 6))
        a = a + a.T
        values, vectors, off = jacobi_eigh(a)
        assert off < 1e-12 * max(1.0, np.linalg.norm(a))
        np.testing.assert_allclose(np.sort(values), np.linalg.eigvalsh(a), atol=1e-10)
        np.testing.assert_allclose(a @ vectors, vectors * values, atol=1e-10)

    def test_rejects_non_symmetric(self):
        with pytest.raises(ValueError):
            jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_diagonal_input(self):
        values, vectors, off = jacobi_eigh(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_array_equal(values, [3.0, 1.0, 2.0])
        np.testing.assert_array_equal(vectors, np.eye(3))
        assert off == 0.0


class TestPca:
    def line_model(self):
        x = np.array([[t, t] for t in (-2.0, -1.0, 0.0, 1.0, 2.0)])
        return pca_fit(x, 1), x

    def test_line_component(self):
        model, _ = self.line_model()
        np.testing.assert_allclose(model.components[:, 0], [2 ** -0.5, 2 ** -0.5], atol=1e-12)
        assert model.spectrum[1] == pytest.approx(0.0, abs=1e-12)

    def test_line_encode(self):
        model, _ = self.line_model()
        np.testing.assert_allclose(pca_encode(model, model.mean + 1.0), [np.sqrt(2.0)], atol=1e-12)

    def test_encode_mean_is_zero(self):
        model = pca_fit(SeededRng(2).normal((30, 4)), 2)
        np.testing.assert_allclose(pca_encode(model, model.mean), 0.0, atol=1e-15)

    def test_decode_zero_is_mean(self):
        model = pca_fit(SeededRng(2).normal((30, 4)), 2)
        np.testing.assert_array_equal(pca_decode(model, np.zeros(2)), model.mean)

    def test_in_subspace_round_trip(self):
        model = pca_fit(SeededRng(3).normal((30, 5)), 2)
        x = model.mean + model.components @ np.array([1.5, -0.7])
        np.testing.assert_allclose(pca_decode(model, pca_encode(model, x)), x, atol=1e-10)

    def test_full_basis_zero_error(self):
        x = SeededRng(4).normal((25, 4))
        model = pca_fit(x, 4)
        assert reconstruction_error(model.encode, model.decode, x) <= 1e-10

    def test_trace_identity(self):
        x = SeededRng(5).normal((60, 6))
        model = pca_fit(x, 6)
        assert np.sum(model.eigenvalues) == pytest.approx(np.trace(np.cov(x, rowvar=False)), abs=1e-8)

    def test_residual_identity(self):
        # summed error equals (n-1) times the discarded sample-covariance eigenvalues
        x = SeededRng(6).normal((100, 10))
        model = pca_fit(x, 3)
        err = reconstruction_error(model.encode, model.decode, x)
        assert err == pytest.approx((x.shape[0] - 1) * np.sum(model.discarded), rel=1e-6)

    def test_matches_bruteforce_eq2(self):
        x = SeededRng(7).normal((40, 5))
        model = pca_fit(x, 2)
        assert reconstruction_error(model.encode, model.decode, x) == pytest.approx(
            eq2_bruteforce(model, x), rel=1e-12)

    def test_identity_encoder_decoder(self):
        x = SeededRng(8).normal((10, 3))
        assert reconstruction_error(lambda r: r, lambda z: z, x) == 0.0

    def test_optimal_against_random_frames(self):
        rng = SeededRng(9)
        x = rng.normal((50, 8)) @ rng.normal((8, 8))
        xc = x - x.mean(axis=0)
        for dim in range(1, 8):
            best = eq2_bruteforce(pca_fit(x, dim), x)
            for _ in range(100):
                q, _ = np.linalg.qr(rng.normal((8, dim)))
                assert np.sum((xc - xc @ q @ q.T) ** 2) >= best - 1e-9

    def test_sign_rule_and_order(self):
        model = pca_fit(SeededRng(10).normal((50, 5)), 5)
        for j in range(5):
            col = model.components[:, j]
            assert col[np.argmax(np.abs(col))] > 0
        assert np.all(np.diff(model.eigenvalues) <= 0)
        assert np.all(model.eigenvalues >= -1e-10)

    def test_dim_out_of_range(self):
        with pytest.raises(ValueError):
            pca_fit(np.ones((5, 3)), 4)
        with pytest.raises(ValueError):
            pca_fit(np.ones((5, 3)), 0)

    def test_length_mismatch(self):
        model = pca_fit(SeededRng(1).normal((10, 3)), 2)
        with pytest.raises(ShapeError):
            pca_encode(model, np.ones(4))
        with pytest.raises(ShapeError):
            pca_decode(model, np.ones(3))

    def test_save_load_round_trip(self, tmp_path):
        model = pca_fit(SeededRng(11).normal((20, 4)), 2)
        save_pca(model, tmp_path / "m.pca")
        back = load_pca(tmp_path / "m.pca")
        np.testing.assert_array_equal(back.components, model.components)
        np.testing.assert_array_equal(back.mean, model.mean)
        np.testing.assert_array_equal(back.spectrum, model.spectrum)

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(3, 40), p=st.integers(1, 7), seed=st.integers(0, 2**32))
    def test_orthonormal_property(self, n, p, seed):
        x = SeededRng(seed).normal((n, p))
        for dim in range(1, p + 1):
            c = pca_fit(x, dim).components
            np.testing.assert_allclose(c.T @ c, np.eye(dim), atol=1e-8)
