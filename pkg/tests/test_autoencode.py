import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedrate.autoencode import (
    AutoencoderSpec,
    ConvStage,
    SpecError,
    ae_fit,
    build_autoencoder,
    conv_ae_fit,
    encode_batch,
    read_pnm,
    write_pnm,
)
from embedrate.errors import ParseError, ShapeError
from embedrate.nn import MaxPool, MaxUnpool, Network, TrainConfig, dataset_loss, forward, grad_check
from embedrate.synth import square_images
from embedrate.tensor import SeededRng


class TestSpec:
    def test_bottleneck_must_be_undercomplete(self):
        with pytest.raises(SpecError):
            AutoencoderSpec((4,), 4)

    def test_bottleneck_positive(self):
        with pytest.raises(SpecError):
            AutoencoderSpec((4,), 0)

    def test_pool_to_zero_is_spec_error(self):
        spec = AutoencoderSpec((3, 3, 1), 2, (ConvStage(3, 2, True),), kind="conv")
        with pytest.raises(SpecError):
            build_autoencoder(spec)

    def test_decoder_mirrors_encoder(self):
        spec = AutoencoderSpec((10,), 2, (6, 4))
        _, enc, dec = build_autoencoder(spec)
        assert [(l.n_in, l.n_out) for l in enc.layers] == [(10, 6), (6, 4), (4, 2)]
        assert [(l.n_in, l.n_out) for l in dec.layers] == [(2, 4), (4, 6), (6, 10)]

    def test_halves_share_layers(self):
        net, enc, dec = build_autoencoder(AutoencoderSpec((5,), 2))
        assert net.layers == enc.layers + dec.layers


class TestDenseAutoencoder:
    def test_one_dimensional_subspace(self):
        rng = SeededRng(0)
        x = np.outer(rng.normal(100), rng.normal(6)) + rng.normal(6)
        spec = AutoencoderSpec((6,), 1, hidden_activation="identity")
        net, _, _ = build_autoencoder(spec, seed=0)
        initial = dataset_loss(net, x, x)
        _, _, history = ae_fit(x, spec, TrainConfig(learning_rate=0.01, epochs=500, batch_size=20))
        assert history[-1] < 1e-4 * initial

    def test_determinism(self):
        x = SeededRng(1).normal((30, 5))
        spec = AutoencoderSpec((5,), 2, (4,))
        cfg = TrainConfig(epochs=3, batch_size=8, seed=5)
        enc_a, _, hist_a = ae_fit(x, spec, cfg)
        enc_b, _, hist_b = ae_fit(x, spec, cfg)
        assert hist_a == hist_b
        np.testing.assert_array_equal(forward(enc_a, x).prediction, forward(enc_b, x).prediction)

    def test_rejects_conv_spec(self):
        with pytest.raises(SpecError):
            ae_fit(np.ones((4, 16)), AutoencoderSpec.default_conv((4, 4, 1), 2), TrainConfig())

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            ae_fit(np.ones((4, 3)), AutoencoderSpec((5,), 2), TrainConfig())


class TestConvAutoencoder:
    def test_untrained_round_trip_shape(self):
        net, enc, _ = build_autoencoder(AutoencoderSpec.default_conv((16, 16, 1), 8), seed=0)
        x = SeededRng(0).uniform((16, 16, 1))
        assert forward(net, x).prediction.shape == (16, 16, 1)
        assert forward(enc, x).prediction.shape == (8,)

    def test_gradients(self):
        spec = AutoencoderSpec.default_conv((8, 8, 1), 3)
        net, _, _ = build_autoencoder(spec, seed=1)
        x = SeededRng(2).uniform((8, 8, 1))
        assert grad_check(net, x, x) < 1e-4

    def test_training_halves_loss_on_squares(self):
        images = square_images(n=64, seed=0)
        spec = AutoencoderSpec.default_conv((16, 16, 1), 8, output_activation="sigmoid")
        cfg = TrainConfig(learning_rate=0.05, epochs=20, batch_size=8)
        net, _, _ = build_autoencoder(spec, seed=cfg.seed)
        x = np.array(images)
        initial = dataset_loss(net, x, x)
        encoder, _, history = conv_ae_fit(images, spec, cfg)
        assert history[-1] < 0.5 * initial
        table = encode_batch(encoder, images)
        assert table.vectors.shape == (64, 8)

    def test_mixed_shapes_rejected(self):
        spec = AutoencoderSpec.default_conv((8, 8, 1), 3)
        with pytest.raises(ShapeError):
            conv_ae_fit([np.zeros((8, 8, 1)), np.zeros((9, 8, 1))], spec, TrainConfig())


class TestPoolUnpool:
    @settings(max_examples=40, deadline=None)
    @given(h=st.integers(1, 4), w=st.integers(1, 4), c=st.integers(1, 3), seed=st.integers(0, 2**32))
    def test_unpool_scatters_maxima(self, h, w, c, seed):
        x = SeededRng(seed).normal((2 * h, 2 * w, c))
        net = Network([MaxPool(0), MaxUnpool(x.shape, 0)], x.shape)
        y = forward(net, x).prediction
        for i in range(h):
            for j in range(w):
                for k in range(c):
                    window = x[2 * i:2 * i + 2, 2 * j:2 * j + 2, k]
                    out = y[2 * i:2 * i + 2, 2 * j:2 * j + 2, k]
                    u, v = np.unravel_index(np.argmax(window), (2, 2))
                    assert out[u, v] == window[u, v]
                    assert np.count_nonzero(out) <= 1


class TestEncodeBatch:
    def test_empty(self):
        _, enc, _ = build_autoencoder(AutoencoderSpec((5,), 2))
        table = encode_batch(enc, [])
        assert len(table) == 0 and table.dim == 2

    def test_duplicates_identical(self):
        _, enc, _ = build_autoencoder(AutoencoderSpec((5,), 3), seed=2)
        x = SeededRng(3).normal(5)
        table = encode_batch(enc, [x, x], ids=["a", "b"])
        np.testing.assert_array_equal(table["a"], table["b"])
        assert table.dim == 3

    def test_bad_item_named(self):
        _, enc, _ = build_autoencoder(AutoencoderSpec((5,), 3))
        with pytest.raises(ShapeError, match="'b'"):
            encode_batch(enc, [np.zeros(5), np.zeros(4)], ids=["a", "b"])


class TestPnm:
    def test_round_trip_gray(self, tmp_path):
        im = np.arange(12).reshape(3, 4, 1) / 11.0
        write_pnm(tmp_path / "a.pgm", im, maxval=11)
        np.testing.assert_allclose(read_pnm(tmp_path / "a.pgm"), im, atol=1e-15)

    def test_binary_color(self, tmp_path):
        raw = bytes(range(18))
        (tmp_path / "b.ppm").write_bytes(b"P6\n# comment\n3 2\n255\n" + raw)
        im = read_pnm(tmp_path / "b.ppm")
        assert im.shape == (2, 3, 3)
        assert im[1, 2, 2] == pytest.approx(17 / 255)

    def test_truncated_raster(self, tmp_path):
        (tmp_path / "c.pgm").write_text("P2\n2 2\n255\n1 2 3\n")
        with pytest.raises(ParseError):
            read_pnm(tmp_path / "c.pgm")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "d.pgm").write_text("P9\n2 2\n255\n1 2 3 4\n")
        with pytest.raises(ParseError):
            read_pnm(tmp_path / "d.pgm")
