"""CRAE: spatial embeddings from the neighbourhood of each location.

Around every point a q x q grid of cells is laid out; each cell takes the
census features of its nearest source point (its Voronoi region). A
convolutional autoencoder trained on these cuboids yields embeddings that
vary smoothly in space, unlike per-point PCA of the noisy features.
"""

import numpy as np

from embedrate.dimred import pca_fit
from embedrate.embeddings import EmbeddingTable
from embedrate.geo import build_cuboids, crae_embed, crae_fit, smoothness_score
from embedrate.nn import TrainConfig
from embedrate.synth import smooth_geo_field


def main():
    pts = smooth_geo_field(n=500, p=4, seed=0)
    cubes = build_cuboids(pts, q=9)
    print(f"{len(cubes)} cuboids of shape {cubes[0].values.shape} (4 features + coverage mask)")
    encoder = crae_fit(cubes, 2, cfg=TrainConfig(learning_rate=0.002, epochs=40, batch_size=16))
    crae = EmbeddingTable(pts.ids, np.array([crae_embed(encoder, c) for c in cubes]))
    pca = EmbeddingTable(pts.ids, pca_fit(pts.features, 2).encode(pts.features))
    print(f"smoothness (mean cosine to 5 nearest neighbours): "
          f"CRAE {smoothness_score(crae, pts.coords):.3f}, per-point PCA {smoothness_score(pca, pts.coords):.3f}")


if __name__ == "__main__":
    main()
