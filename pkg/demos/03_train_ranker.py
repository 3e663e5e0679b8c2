"""
The query ranker
================

The ranker boosts query and caption embeddings with the image embedding,
passes the caption through a small tanh network, fuses, and classifies into
four (answer, label) categories. The supportive probability of a query is
the mass on "Yes and Real" plus "No and Fake".
"""

import numpy as np

from decontext import Answer, EmbeddingTriple, Hyperparameters, Label, TrainSample, init_model, train
from decontext.ranker import accuracy, classify, fuse, grad_check, support_prob

rng = np.random.default_rng(0)
D = 16

# Toy data: the query vector encodes the oracle answer and the caption vector
# the pair label, each along its own random direction.
a_dir, l_dir = rng.choice([-1.0, 1.0], D), rng.choice([-1.0, 1.0], D)
samples = []
for i in range(400):
    answer = Answer.YES if i % 2 else Answer.NO
    label = Label.REAL if (i // 2) % 2 else Label.FAKE
    h_q = (1 if answer is Answer.YES else -1) * a_dir + 0.1 * rng.standard_normal(D)
    h_c = (1 if label is Label.REAL else -1) * l_dir + 0.1 * rng.standard_normal(D)
    samples.append(TrainSample(EmbeddingTriple(h_q, h_c, np.ones(D)), answer, label))

model = init_model(D, seed=0)

# Before training, check the hand-written backward pass against central
# differences.
print(f"gradient check, max relative error: {grad_check(model, samples[0]):.1e}")

result = train(samples, model, Hyperparameters(lr=0.05, epochs=20, shuffle_seed=0))
print("loss by epoch:", " ".join(f"{l:.3f}" for l in result.losses[::4]))
print("training accuracy:", accuracy(samples, result.model))

# A query whose answer agrees with the pair's label is supportive.
for s in samples[:4]:
    p = classify(fuse(s.triple, result.model), result.model)
    print(f"{s.answer.value:<3} {s.label.value:<4} p={np.round(p, 3)}  P_S={support_prob(p):.3f}")
