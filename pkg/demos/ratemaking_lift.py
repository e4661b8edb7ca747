"""Step 2: does adding embeddings to a Poisson frequency GLM help?

Claim counts depend on rating variables and on a hidden factor that is a
linear function of ten noisy "emerging data" columns. A 2-component PCA of
those columns is added to the design, and holdout deviance is compared with
the rating-only baseline.
"""

from embedrate.dimred import pca_fit
from embedrate.evaluate import extrinsic_compare
from embedrate.glm import GlmFamily, assemble_features, coefficient_report, glm_fit
from embedrate.synth import tabular_latent


def main():
    data = tabular_latent(n=2000, seed=0)
    codes = pca_fit(data["emerging"], 2).encode(data["emerging"])
    base = [("rating", data["rating"])]
    augmented = base + [("pca", codes)]

    model = glm_fit(assemble_features(augmented), data["y"], GlmFamily("poisson"))
    print(coefficient_report(model))

    report = extrinsic_compare(base, augmented, data["y"], GlmFamily("poisson"), seed=0)
    print(report.to_text())


if __name__ == "__main__":
    main()
