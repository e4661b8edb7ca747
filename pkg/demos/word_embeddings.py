"""word2vec on a corpus with two planted token clusters.

Tokens a0..a9 only co-occur with each other, as do b0..b9. After training,
the cosine nearest neighbours of a0 should all be a-tokens.
"""

from embedrate.evaluate import nearest_neighbors
from embedrate.nn import TrainConfig
from embedrate.synth import cluster_corpus
from embedrate.text import build_vocab, doc_centroid, word2vec_train


def main():
    docs = cluster_corpus(n_docs=2000, vocab_size=20, seed=0)
    vocab = build_vocab(docs)
    cfg = TrainConfig(learning_rate=0.025, epochs=5, batch_size=64, seed=0)
    for mode in ("skipgram", "cbow"):
        history = []
        table = word2vec_train(docs, vocab, mode, window=2, dim=16, negatives=5, cfg=cfg, history=history)
        print(f"{mode}: loss per epoch {[round(h, 3) for h in history]}")
        print(nearest_neighbors(table, "a0", 5).to_text())
    centroid = doc_centroid(docs[0], table)
    print(f"first document {' '.join(docs[0])!r} -> centroid {centroid[:4].round(3)} ...")


if __name__ == "__main__":
    main()
