"""Next-step prediction on synthetic student traces.

Each synthetic student grows a program step by step toward a target.
Three predictors guess the next tree from the current one:

  identity  predict no change (a floor any useful method must beat... at
            least eventually; on slow-moving traces it is a strong baseline)
  onenn     copy the recorded successor of the most similar training tree
  linear    encode, take one step of the fitted linear dynamics toward the
            encoded solution, decode

Scores are root-mean-square tree edit distance, lower is better. The demo
model is small and briefly trained, so treat the numbers as plumbing
proof rather than benchmark results.
"""

import numpy as np

from treevec import (kfold_by_student, minipy, predict_eval, synth_corpus,
                     synth_traces, tree_size)
from treevec.autoencoder import ModelConfig, init_model, train

g = minipy()
corpus = synth_corpus(g, seed=4, count=300, max_depth=4, max_list=3)
model = init_model(g, ModelConfig(latent_dim=32, seed=4))
model, _ = train(model, corpus.trees, epochs=2000)

traces = synth_traces(g, seed=4, students=20, steps=6, max_depth=4, max_list=3)
print(f"{len(traces)} students, trace lengths "
      f"{sorted({len(tr.steps) for tr in traces})}")
solution = max((tr.trees()[-1] for tr in traces), key=tree_size)

folds = kfold_by_student(traces, folds=5, seed=4)
scores: dict[str, list[float]] = {}
for train_traces, test_traces in folds:
    rmse = predict_eval(model, [tr.trees() for tr in train_traces],
                        [tr.trees() for tr in test_traces], solution)
    for method, value in rmse.items():
        scores.setdefault(method, []).append(value)

print("\nfive-fold RMSE of tree edit distance (mean over folds):")
for method, values in sorted(scores.items()):
    print(f"  {method:9s} {np.mean(values):6.2f}")
