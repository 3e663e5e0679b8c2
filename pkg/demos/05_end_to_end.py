"""
End to end on planted truth
===========================

The synthetic generator writes a dataset with a known answer for every
question, a noisy oracle fixture, and embeddings for the ranker. The full
pipeline then runs offline. Turning the ranker off (uniform supportiveness,
so the evidence set is simply the first k queries) shows what it buys.
"""

import tempfile
from pathlib import Path

from decontext import load_config, run_pipeline, synthesize

with tempfile.TemporaryDirectory() as tmp:
    data = Path(tmp) / "synthetic"
    summary = synthesize(data, size=300, noise=0.15, seed=0, distractor_rate=0.2)
    print(f"{summary.n_samples} samples, {summary.n_queries} questions, {summary.flip_fraction:.3f} flipped")

    for use_ranker in (True, False):
        cfg = load_config(data / "config.json", use_ranker=use_ranker)
        m = run_pipeline(data / "dataset.jsonl", Path(tmp) / f"run-{use_ranker}", cfg, data / "annotations.jsonl")
        name = "with ranker   " if use_ranker else "uniform p_s   "
        print(f"{name} accuracy {m['accuracy']:.3f}  AUC {m['auc_roc']:.3f}  "
              f"FAR {m['far']:.3f}  FRR {m['frr']:.3f}  HIT@10 {m['hit_at_10']:.3f}")

    # The evidence for the first test sample, as a reader would see it.
    print()
    print((Path(tmp) / "run-True" / "eval" / "evidence.txt").read_text().split("\n\n")[0])
