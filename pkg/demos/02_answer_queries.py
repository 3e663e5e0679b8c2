"""
Asking the oracle
=================

Any image-text scorer returning a number in [0, 1] can act as the oracle.
Scores are thresholded into Yes/No and cached on disk, keyed by a hash of
(image, question, oracle id).
"""

import tempfile
from pathlib import Path

from decontext import AnswerCache, FixtureBackend, NoisyPlantedBackend, answer_query, batch_answer

image = "img/dog_park.jpg"
questions = [
    "Is the photo about dog?",
    "In the photo, is dog brown?",
    "Is the photo taken in park?",
    "Is the photo about dog run park?",
]

# A fixture table stands in for a real model. The dog in this photo is black.
backend = FixtureBackend({(image, q): s for q, s in zip(questions, [0.93, 0.12, 0.71, 0.64])})
for q in questions:
    a = answer_query(backend, image, q, tau=0.5)
    print(f"{a.raw_score:.2f} -> {a.answer.value:<3}  {q}")

# Batches run with a bounded number of requests in flight and come back in
# question order. A second pass is served entirely from the cache file.
with tempfile.TemporaryDirectory() as tmp:
    cache = AnswerCache(Path(tmp) / "cache.jsonl")
    first = batch_answer(backend, image, questions, max_inflight=2, cache=cache)
    second = batch_answer(backend, image, questions, cache=AnswerCache(Path(tmp) / "cache.jsonl"))
    print("cache entries:", len(cache), "identical rerun:", first == second)

# For experiments, a planted-truth oracle flips each answer independently
# with probability eps. The flip is a fixed function of (seed, image, text).
truth = {(f"img{i}", "Is the photo about dog?"): i % 2 == 0 for i in range(10_000)}
noisy = NoisyPlantedBackend(truth, noise=0.1, seed=0)
flips = sum(noisy.flipped(*key) for key in truth)
print(f"observed flip rate at eps=0.1: {flips / len(truth):.4f}")
