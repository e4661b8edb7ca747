"""Linear autoencoder versus PCA on the same data.

A fully connected autoencoder with identity activations and a 3-unit
bottleneck can do no better than PCA with 3 components; trained long enough
it gets there. Both are fitted here and their reconstruction errors
compared.
"""

from embedrate.autoencode import AutoencoderSpec, ae_fit
from embedrate.dimred import pca_decode, pca_encode, pca_fit, reconstruction_error
from embedrate.nn import TrainConfig, forward
from embedrate.tensor import SeededRng


def main():
    x = SeededRng(0).normal((100, 10))

    pca = pca_fit(x, 3)
    pca_err = reconstruction_error(lambda a: pca_encode(pca, a), lambda z: pca_decode(pca, z), x)
    print(f"PCA: top eigenvalues {pca.eigenvalues.round(3)}, reconstruction error {pca_err:.4f}")

    spec = AutoencoderSpec((10,), 3, hidden_activation="identity")
    encoder, decoder, history = ae_fit(x, spec, TrainConfig(learning_rate=0.02, epochs=2000, batch_size=100))
    ae_err = reconstruction_error(lambda a: forward(encoder, a).prediction,
                                  lambda z: forward(decoder, z).prediction, x)
    print(f"linear AE: loss {history[0]:.3f} -> {history[-1]:.3f}, reconstruction error {ae_err:.4f}")
    print(f"AE is {100 * (ae_err / pca_err - 1):.4f}% above the PCA optimum")


if __name__ == "__main__":
    main()
