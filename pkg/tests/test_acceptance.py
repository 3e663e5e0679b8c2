"""Exit criteria. Run with ``pytest -m acceptance -s`` to see one PASS/FAIL line per criterion."""

import time

import numpy as np
import pytest

import builders
from decontext.extraction import extract_queries, extract_statements
from decontext.graph import parse_graph
from decontext.labels import Answer, Label
from decontext.metrics import accuracy, auc_roc, far_frr, hit_at_k
from decontext.pipeline import load_config, run_pipeline, synthesize
from decontext.ranker import (
    EmbeddingTriple,
    Hyperparameters,
    TrainSample,
    classify,
    grad_check,
    init_model,
    softmax,
    support_prob,
    train,
)
from decontext.ranker import accuracy as ranker_accuracy
from oracles import (
    brute_hit_at_k,
    count_metrics,
    enumerate_statements,
    pairwise_auc,
    random_doc,
    random_metric_instance,
    separable_set,
)

pytestmark = pytest.mark.acceptance


def test_extraction_matches_enumerator(criterion):
    docs = [random_doc(np.random.default_rng([2024, i]), max_nodes=30) for i in range(1000)]
    expected = [enumerate_statements(d) for d in docs]
    start = time.perf_counter()
    got = [[(s.kind.value, s.x, s.y, s.z) for s in extract_statements(parse_graph(d))] for d in docs]
    elapsed = time.perf_counter() - start
    mismatches = sum(g != e for g, e in zip(got, expected))
    criterion("extraction oracle equivalence", mismatches == 0 and elapsed < 5.0,
              f"{mismatches} mismatches over 1000 graphs, {elapsed:.2f}s")


def test_worked_example(criterion):
    def node(i, s, p, ne="None"):
        return {"id": i, "surface": s, "pos": p, "ne": ne}

    doc = {
        "caption": "A brown dog runs in the park",
        "nodes": [node(0, "dog", "Noun"), node(1, "brown", "Adjective"), node(2, "park", "Noun", "Location"),
                  node(3, "run", "Verb")],
        "edges": [{"src": 0, "dst": 1, "relation": ":mod"}, {"src": 3, "dst": 0, "relation": ":ARG0"},
                  {"src": 3, "dst": 2, "relation": ":location"}],
    }
    qs = extract_queries(parse_graph(doc))
    got = [(q.statement.kind.value, q.statement.x, q.statement.y, q.statement.z, q.text.encode()) for q in qs]
    want = [
        ("Object", "dog", None, None, b"Is the photo about dog?"),
        ("Attribute", "dog", "brown", None, b"In the photo, is dog brown?"),
        ("SpatialTemporal", "park", None, None, b"Is the photo taken in park?"),
        ("Relationship", "dog", "run", "park", b"Is the photo about dog run park?"),
    ]
    criterion("worked dog/brown/run/park example", got == want, f"{len(got)} statements, strings byte-exact={got == want}")


def test_gradient_fidelity(criterion):
    worst = 0.0
    for i in range(100):
        rng = np.random.default_rng([7, i])
        D, H = int(rng.integers(2, 9)), int(rng.integers(1, 9))
        m = init_model(D, H, seed=i)
        t = EmbeddingTriple(*rng.standard_normal((3, D)))
        s = TrainSample(t, [Answer.YES, Answer.NO][rng.integers(2)], [Label.REAL, Label.FAKE][rng.integers(2)])
        worst = max(worst, grad_check(m, s, delta=1e-5))
    criterion("gradient fidelity", worst < 1e-4, f"max relative error {worst:.2e} over 100 pairs (delta=1e-5)")


def test_classifier_normalisation(criterion):
    rng = np.random.default_rng(11)
    scale = 10.0 ** rng.uniform(-3, 3, size=(10_000, 1))
    logits = rng.standard_normal((10_000, 4)) * scale
    p = softmax(logits)
    sum_err = float(np.abs(p.sum(axis=1) - 1.0).max())
    m = init_model(8, seed=11)
    ps = support_prob(classify(rng.standard_normal((10_000, 8)) * scale, m))
    sp = support_prob(p)
    in_range = bool(((sp >= 0) & (sp <= 1)).all() and ((ps >= 0) & (ps <= 1)).all())
    criterion("classifier normalisation", sum_err <= 1e-9 and in_range,
              f"max |sum-1| = {sum_err:.1e} over 10000 inputs, support_prob in [0,1]: {in_range}")


def test_separable_training(criterion):
    rows = separable_set(D=16, n=400, sigma=0.1, seed=0)
    samples = [TrainSample(EmbeddingTriple(q, c, v), Answer(a), Label(l)) for q, c, v, a, l in rows]
    start = time.perf_counter()
    res = train(samples, init_model(16, seed=0), Hyperparameters(lr=0.05, epochs=50, shuffle_seed=0))
    elapsed = time.perf_counter() - start
    acc = ranker_accuracy(samples, res.model)
    jitter = max(b / a for a, b in zip(res.losses, res.losses[1:]))
    ok = acc >= 0.95 and jitter <= 1.05 and elapsed < 30.0
    criterion("separable ranker training", ok,
              f"accuracy {acc:.3f} after 50 epochs, worst epoch loss ratio {jitter:.3f}, {elapsed:.1f}s")


def _end_to_end(tmp_path, name, noise, seed=0, distractor_rate=0.0, use_ranker=True):
    d = tmp_path / name
    if not (d / "config.json").exists():
        synthesize(d, 500, noise, seed=seed, distractor_rate=distractor_rate)
    cfg = load_config(d / "config.json", use_ranker=use_ranker)
    return run_pipeline(d / "dataset.jsonl", d / ("run" if use_ranker else "run-noranker"), cfg, d / "annotations.jsonl")


def test_end_to_end_planted_truth(tmp_path, criterion):
    start = time.perf_counter()
    clean = _end_to_end(tmp_path, "eps0", 0.0)
    noisy = _end_to_end(tmp_path, "eps01", 0.1)
    elapsed = time.perf_counter() - start
    ok = (clean["accuracy"] == 1.0 and clean["auc_roc"] == 1.0
          and noisy["accuracy"] >= 0.90 and noisy["auc_roc"] >= 0.95 and elapsed < 60.0)
    criterion("end-to-end planted truth", ok,
              f"eps=0: acc {clean['accuracy']:.3f} auc {clean['auc_roc']:.3f}; "
              f"eps=0.1: acc {noisy['accuracy']:.3f} auc {noisy['auc_roc']:.3f}; {elapsed:.1f}s for both")


def test_ranker_ablation(tmp_path, criterion):
    full = _end_to_end(tmp_path, "abl", 0.15, seed=0, distractor_rate=0.2)
    plain = _end_to_end(tmp_path, "abl", 0.15, seed=0, distractor_rate=0.2, use_ranker=False)
    gap = 100 * (full["accuracy"] - plain["accuracy"])
    criterion("ranker ablation direction", gap >= 3.0,
              f"full {full['accuracy']:.3f} vs uniform p_s {plain['accuracy']:.3f} (gap {gap:.1f} pp)")


def test_metrics_against_brute_force(criterion):
    bad = []
    for seed in range(50):
        inst = random_metric_instance(np.random.default_rng([99, seed]))
        preds = builders.predictions(inst)
        want = count_metrics([(s["true"], s["pred"]) for s in inst["samples"]])
        real = [s["score"] for s in inst["samples"] if s["true"] == "Real"]
        fake = [s["score"] for s in inst["samples"] if s["true"] == "Fake"]
        far, frr = far_frr(preds)
        acc = accuracy(preds)
        identity = 1 - (far * len(fake) + frr * len(real)) / (len(real) + len(fake))
        checks = [
            abs(acc - want["accuracy"]) <= 1e-12,
            abs(far - want["far"]) <= 1e-12 and abs(frr - want["frr"]) <= 1e-12,
            abs(auc_roc(preds) - pairwise_auc(real, fake)) <= 1e-12,
            hit_at_k(builders.reports(inst), builders.annotations(inst), 10) == brute_hit_at_k(inst, 10),
            abs(acc - identity) <= 1e-12,
        ]
        if not all(checks):
            bad.append(seed)
    criterion("metrics correctness", not bad, f"{50 - len(bad)}/50 instances agree on all metrics and the identity")


def test_determinism(tmp_path, criterion):
    synthesize(tmp_path / "a", 60, 0.1, seed=5, distractor_rate=0.2)
    synthesize(tmp_path / "b", 60, 0.1, seed=5, distractor_rate=0.2)
    differing = [p.name for p in (tmp_path / "a").iterdir() if p.read_bytes() != (tmp_path / "b" / p.name).read_bytes()]

    cfg = load_config(tmp_path / "a" / "config.json")
    ds, ann = tmp_path / "a" / "dataset.jsonl", tmp_path / "a" / "annotations.jsonl"
    run_pipeline(ds, tmp_path / "run1", cfg, ann)  # fills the cache
    run_pipeline(ds, tmp_path / "run2", cfg, ann)  # warm cache
    run_pipeline(ds, tmp_path / "run3", cfg, ann)
    outputs = sorted(p.relative_to(tmp_path / "run2") for p in (tmp_path / "run2").rglob("*") if p.is_file())
    for rel in outputs:
        for other in ("run1", "run3"):
            if (tmp_path / other / rel).read_bytes() != (tmp_path / "run2" / rel).read_bytes():
                differing.append(f"{other}/{rel}")
    criterion("determinism", not differing and len(outputs) == 6,
              f"synth files and {len(outputs)} pipeline outputs byte-identical across reruns; differing: {differing or 'none'}")
