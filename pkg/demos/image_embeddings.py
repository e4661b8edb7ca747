"""Convolutional autoencoder embeddings of small images.

Each 16x16 image holds one bright square. The encoder (conv, max-pool, conv,
dense) is trained jointly with its mirrored decoder to reconstruct the
image; the bottleneck activations are the embedding.
"""

import numpy as np

from embedrate.autoencode import AutoencoderSpec, conv_ae_fit, encode_batch
from embedrate.nn import TrainConfig
from embedrate.synth import square_images


def main():
    images = square_images(n=64, size=16, seed=0)
    spec = AutoencoderSpec.default_conv((16, 16, 1), 8, output_activation="sigmoid")
    encoder, _, history = conv_ae_fit(images, spec, TrainConfig(learning_rate=0.05, epochs=20, batch_size=8))
    print(f"reconstruction loss {history[0]:.3f} -> {history[-1]:.3f}")
    table = encode_batch(encoder, images)
    brightness = np.array([im.sum() for im in images])
    corr = [abs(np.corrcoef(table.vectors[:, j], brightness)[0, 1]) for j in range(table.dim)]
    print(f"{len(table)} embeddings of length {table.dim}; "
          f"max |correlation| of a component with square area: {max(corr):.2f}")


if __name__ == "__main__":
    main()
