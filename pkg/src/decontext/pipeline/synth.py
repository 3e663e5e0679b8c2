"""Planted-truth synthetic datasets for offline end-to-end runs.

Each sample gets a random POS/NE-annotated caption graph. Every extracted
query is given a planted answer: all Yes for Real pairs (optionally with one
No "distractor" that the image simply does not show), and planted No answers for
Fake pairs, just enough to outvote Yes inside an evidence set of size
``evidence_k`` (plus up to two). The No statements of a Fake pair become its
ground-truth evidence annotation.
The oracle fixture is the planted truth with Bernoulli flip noise, and the
embedding fixture encodes the observed answer and the pair label so that a
ranker can learn them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from decontext.extraction import extract_queries
from decontext.graph import AmrEdge, AmrGraph, AmrNode, NeType, PosTag
from decontext.labels import Label
from decontext.oracle import NoisyPlantedBackend
from decontext.pipeline.records import Sample, write_jsonl

NOUNS = [
    "dog", "taxi", "crowd", "flag", "car", "bus", "child", "woman", "man", "horse", "boat", "bridge",
    "tree", "ball", "banner", "police", "soldier", "firework", "truck", "bicycle", "protester", "player",
    "stadium", "tent", "umbrella", "train", "plane", "church", "market", "farmer", "student", "teacher",
    "doctor", "nurse", "house", "river", "snow", "fire", "camera", "microphone",
]
PERSONS = [
    "Angela Merkel", "Barack Obama", "Serena Williams", "Lionel Messi", "Malala Yousafzai", "Elon Musk",
    "Greta Thunberg", "Narendra Modi", "Jacinda Ardern", "Pope Francis", "Emmanuel Macron", "Xi Jinping",
    "Oprah Winfrey", "Usain Bolt", "Taylor Swift", "Boris Johnson",
]
ORGS = ["NASA", "United Nations", "Red Cross", "FIFA", "NATO", "BBC", "World Bank", "Greenpeace", "UNICEF", "Apple"]
LOCATIONS = [
    "Paris", "Beijing", "London", "New York", "Kabul", "Sydney", "Moscow", "Cairo", "Rio de Janeiro",
    "Tokyo", "Berlin", "Nairobi", "Mumbai", "Gaza", "Kyiv", "Washington",
]
TIMES = ["winter", "summer", "night", "Independence Day", "Christmas", "2019", "morning", "autumn", "Ramadan", "election day"]
VERBS = [
    "run", "chase", "hold", "visit", "celebrate", "protest", "carry", "drive", "meet", "greet", "play", "watch",
    "attack", "rescue", "build", "sign", "kick", "ride", "wave", "address", "block", "lead", "follow", "inspect",
]
ADJECTIVES = [
    "brown", "yellow", "red", "blue", "young", "old", "angry", "happy", "wet", "burning", "crowded", "empty",
    "large", "small", "masked", "smiling", "injured", "armed", "famous", "white", "black", "green",
]
PRONOUNS = ["his", "her", "their", "its"]

MIN_QUERIES = 6


@dataclass
class SynthSummary:
    n_samples: int
    n_queries: int
    n_flipped: int

    @property
    def flip_fraction(self) -> float:
        return self.n_flipped / self.n_queries if self.n_queries else 0.0


def random_graph(rng: np.random.Generator) -> AmrGraph:
    """Random caption graph with nominal entities, adjectives, verbs, places and pronouns."""
    nodes: list[tuple[str, PosTag, NeType]] = []
    edges: list[tuple[int, int, str]] = []
    taken: set[str] = set()

    def pick(pool: list[str]) -> str:
        choices = [w for w in pool if w not in taken]
        word = choices[rng.integers(len(choices))]
        taken.add(word)
        return word

    def add(surface: str, pos: PosTag, ne: NeType = NeType.NONE) -> int:
        nodes.append((surface, pos, ne))
        return len(nodes) - 1

    entities = []
    for _ in range(rng.integers(3, 6)):
        r = rng.random()
        if r < 0.6:
            entities.append(add(pick(NOUNS), PosTag.NOUN))
        elif r < 0.85:
            entities.append(add(pick(PERSONS), PosTag.NAMED_ENTITY, NeType.PERSON))
        else:
            entities.append(add(pick(ORGS), PosTag.NAMED_ENTITY, NeType.ORGANIZATION))
    places = []
    for _ in range(rng.integers(1, 3)):
        if rng.random() < 0.5:
            places.append(add(pick(LOCATIONS), PosTag.NAMED_ENTITY, NeType.LOCATION))
        else:
            places.append(add(pick(TIMES), PosTag.NOUN, NeType.TIME))

    phrases = {e: nodes[e][0] for e in entities}
    for e in entities:
        for _ in range(rng.integers(0, 3)):
            a = add(pick(ADJECTIVES), PosTag.ADJECTIVE)
            edges.append((e, a, ":mod"))
            phrases[e] = f"{nodes[a][0]} {phrases[e]}"

    clauses = []
    mentioned: set[int] = set()
    for _ in range(rng.integers(2, 5)):
        v = add(pick(VERBS), PosTag.VERB)
        args = rng.choice(entities, size=1 if rng.random() < 0.4 else 2, replace=False)
        for role, e in zip((":ARG0", ":ARG1"), args):
            edges.append((v, int(e), role))
        text = " ".join([phrases[int(args[0])], nodes[v][0]] + [phrases[int(e)] for e in args[1:]])
        if places and rng.random() < 0.3:
            p = places[rng.integers(len(places))]
            edges.append((v, p, ":location"))
            mentioned.add(p)
            text += f" in {nodes[p][0]}"
        clauses.append(text)
    if rng.random() < 0.3:
        pr = add(PRONOUNS[rng.integers(len(PRONOUNS))], PosTag.PRONOUN)
        a, b = rng.choice(entities, size=2, replace=False)
        edges.append((int(a), pr, ":poss"))
        edges.append((pr, int(b), ":ARG1"))
        clauses.append(f"{phrases[int(a)]} with {nodes[pr][0]} {phrases[int(b)]}")
    rest = [nodes[p][0] for p in places if p not in mentioned]
    if rest:
        clauses.append("in " + " during ".join(rest))
    caption = ", ".join(clauses)

    relabel = rng.permutation(len(nodes))
    return AmrGraph(
        caption,
        tuple(AmrNode(int(relabel[i]), s, pos, ne) for i, (s, pos, ne) in enumerate(nodes)),
        tuple(AmrEdge(int(relabel[a]), int(relabel[b]), rel) for a, b, rel in edges),
    )


def _splits(size: int, rng: np.random.Generator) -> tuple[list[str], list[Label]]:
    """Split names (about 10:1:1, at least two test samples) and labels balanced inside each split."""
    hold = round(size / 12)
    n_test = min(size, max(hold, 2))
    n_val = min(size - n_test, hold)
    order = rng.permutation(size)
    split = [""] * size
    label = [Label.REAL] * size
    for pos, i in enumerate(order):
        if pos < n_test:
            split[i], j = "test", pos
        elif pos < n_test + n_val:
            split[i], j = "val", pos - n_test
        else:
            split[i], j = "train", pos - n_test - n_val
        label[i] = Label.REAL if j % 2 == 0 else Label.FAKE
    return split, label


def synthesize(
    out_dir: str | Path,
    size: int,
    noise: float = 0.0,
    seed: int = 0,
    distractor_rate: float = 0.0,
    dim: int = 16,
    evidence_k: int = 10,
) -> SynthSummary:
    """Write ``dataset.jsonl``, ``annotations.jsonl``, ``planted.jsonl``, ``oracle_fixture.jsonl``,
    ``embeddings.jsonl`` and a ready-to-use ``config.json`` into ``out_dir``."""
    if not 0.0 <= noise < 0.5:
        raise ValueError(f"noise must be in [0, 0.5), got {noise}")
    if size < 0 or not 0.0 <= distractor_rate <= 1.0 or dim < 1:
        raise ValueError("invalid size, distractor_rate or dim")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    emb_rng = np.random.default_rng([seed, 1])
    split, label = _splits(size, rng)

    samples, sample_queries, planted_recs, annotations = [], [], [], []
    truth: dict[tuple[str, str], bool] = {}
    for i in range(size):
        while True:
            g = random_graph(rng)
            queries = extract_queries(g)
            if len(queries) >= MIN_QUERIES:
                break
        sid, image = f"s{i:05d}", f"synthetic://img/{i:05d}.jpg"
        n = len(queries)
        planted = np.ones(n, dtype=bool)
        distractor = False
        if label[i] is Label.FAKE:
            # smallest strict majority of a full evidence set, up to every query
            m_min = min(n, math.ceil(min(n, evidence_k) / 2) + 1)
            m = min(n, m_min + int(rng.integers(0, 3)))
            planted[rng.choice(n, size=m, replace=False)] = False
            slots: list[str] = []
            for q in queries:
                if not planted[q.index]:
                    slots.extend(s for s in q.statement.slots if s not in slots)
            annotations.append({"id": sid, "slots": slots})
        elif rng.random() < distractor_rate:
            planted[rng.integers(n)] = False
            distractor = True
        for q in queries:
            truth[(image, q.text)] = bool(planted[q.index])
        samples.append(Sample(sid, g.caption, image, g, label[i], split[i]))
        sample_queries.append(queries)
        planted_recs.append({"id": sid, "label": label[i].value, "distractor": distractor,
                             "planted": ["Yes" if p else "No" for p in planted]})

    oracle = NoisyPlantedBackend(truth, noise, seed)
    a_dir = emb_rng.choice([-1.0, 1.0], size=dim)
    l_dir = emb_rng.choice([-1.0, 1.0], size=dim)
    q_base = emb_rng.normal(size=dim)
    c_base = emb_rng.normal(size=dim)
    fixture, embeddings = [], []
    n_queries = n_flipped = 0
    for s, queries, rec in zip(samples, sample_queries, planted_recs):
        h_v = 1.0 + 0.1 * emb_rng.normal(size=dim)
        t = 1.0 if s.label is Label.REAL else -1.0
        h_c = c_base + t * l_dir + 0.1 * emb_rng.normal(size=dim)
        observed = []
        for q in queries:
            score = oracle.score(s.image, q.text)
            flipped = oracle.flipped(s.image, q.text)
            n_queries += 1
            n_flipped += flipped
            observed.append("Yes" if score >= 0.5 else "No")
            sign = 1.0 if score >= 0.5 else -1.0
            h_q = q_base + sign * a_dir + 0.1 * emb_rng.normal(size=dim)
            fixture.append({"image": s.image, "text": q.text, "score": score})
            embeddings.append({"image": s.image, "caption": s.caption, "query": q.text,
                               "h_q": h_q.tolist(), "h_c": h_c.tolist(), "h_v": h_v.tolist()})
        rec["observed"] = observed

    write_jsonl(out / "dataset.jsonl", (s.to_dict() for s in samples))
    write_jsonl(out / "annotations.jsonl", annotations)
    write_jsonl(out / "planted.jsonl", planted_recs)
    write_jsonl(out / "oracle_fixture.jsonl", fixture)
    write_jsonl(out / "embeddings.jsonl", embeddings)
    config: dict[str, Any] = {
        "seed": seed,
        "oracle": {"kind": "fixture", "path": "oracle_fixture.jsonl"},
        "encoder": {"kind": "fixture", "path": "embeddings.jsonl"},
        "cache_path": "oracle_cache.jsonl",
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return SynthSummary(size, n_queries, n_flipped)
