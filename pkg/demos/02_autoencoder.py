"""Train a small tree autoencoder and round-trip some trees.

The encoder folds a tree bottom-up into a fixed-size vector; the decoder
unfolds a vector back into a grammar-valid tree. After a short training
run on a synthetic corpus the two compose to near-identity on small
trees. (The test suite trains the full configuration; this demo keeps the
corpus and epoch count small so it finishes in about a minute.)
"""

import numpy as np

from treevec import minipy, serialize_tree, synth_corpus, ted, tree_size
from treevec.autoencoder import ModelConfig, decode, encode, init_model, train

g = minipy()
corpus = synth_corpus(g, seed=1, count=300, max_depth=4, max_list=3)
print(f"corpus: {len(corpus.trees)} distinct trees, "
      f"mean size {np.mean([tree_size(t) for t in corpus.trees]):.1f} nodes")

model = init_model(g, ModelConfig(latent_dim=32, seed=1))
model, losses = train(model, corpus.trees, epochs=3000)
print(f"trained 3000 epochs; batch loss {losses[0]:.0f} -> {np.mean(losses[-100:]):.0f}")

errors = [ted(t, decode(model, encode(model, t))) for t in corpus.trees]
print(f"round-trip edit distance: median {np.median(errors):.0f}, "
      f"exact {np.mean(np.asarray(errors) == 0):.0%}")

t = max(corpus.trees, key=tree_size)
print("\nexample round trip:")
print("  in: ", serialize_tree(g, t))
print("  out:", serialize_tree(g, decode(model, encode(model, t))))

# decoding is total: any vector yields a grammar-valid tree
z = np.random.default_rng(0).normal(size=32)
print("\na random vector still decodes to a valid tree:")
print("  ", serialize_tree(g, decode(model, z)))
