"""Many-to-one RNN on variable-length sequences; the last hidden state is the embedding.

Each sequence is labelled 1 iff the marker symbol appears somewhere in it.
The RNN is trained to predict that label, and its final hidden state becomes
a fixed-length embedding whatever the sequence length.
"""

import numpy as np

from embedrate.nn import TrainConfig
from embedrate.sequence import many_to_one_fit, rnn_forward, sequence_embed
from embedrate.synth import marker_sequences


def main():
    seqs, labels = marker_sequences(n=200, max_len=10, seed=0)
    history = []
    params = many_to_one_fit(seqs, labels, TrainConfig(learning_rate=0.1, epochs=100, batch_size=8),
                             hidden=8, history=history)
    preds = np.array([rnn_forward(s, params)[1][-1, 0] for s in seqs])
    print(f"loss {history[0]:.3f} -> {history[-1]:.3f}; "
          f"training accuracy {np.mean((preds > 0.5) == (labels == 1)):.3f}")
    for s, y in list(zip(seqs, labels))[:4]:
        print(f"length {len(s):2d}, label {int(y)} -> embedding {sequence_embed(s, params).round(2)}")


if __name__ == "__main__":
    main()
