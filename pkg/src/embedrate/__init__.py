"""Embeddings for non-vectorial insurance data, consumed by a GLM."""

__version__ = "0.1.0"
