"""Detection metrics (accuracy, FAR, FRR, ROC AUC) and the HIT@k evidence score."""

from __future__ import annotations

import json
import math
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from decontext.labels import Label
from decontext.verdict import EvidenceReport


class MetricsError(ValueError):
    pass


class EmptyInput(MetricsError):
    pass


class MissingClass(MetricsError):
    pass


class MissingAnnotation(MetricsError, KeyError):
    pass


@dataclass(frozen=True)
class LabeledPrediction:
    true_label: Label
    predicted_label: Label
    score: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class EvidenceAnnotation:
    sample_id: str
    slots: tuple[str, ...]

    def __post_init__(self) -> None:
        if any(not s.strip() for s in self.slots):
            raise ValueError(f"{self.sample_id}: empty annotation slot")


def accuracy(preds: Sequence[LabeledPrediction]) -> float:
    if not preds:
        raise EmptyInput("no predictions")
    return sum(p.true_label == p.predicted_label for p in preds) / len(preds)


def _split(preds: Sequence[LabeledPrediction]) -> tuple[list[LabeledPrediction], list[LabeledPrediction]]:
    real = [p for p in preds if p.true_label is Label.REAL]
    fake = [p for p in preds if p.true_label is Label.FAKE]
    if not real or not fake:
        raise MissingClass(f"need both classes, got {len(real)} Real and {len(fake)} Fake")
    return real, fake


def far_frr(preds: Sequence[LabeledPrediction]) -> tuple[float, float]:
    """FAR: share of Fake pairs accepted as Real. FRR: share of Real pairs rejected as Fake."""
    real, fake = _split(preds)
    far = sum(p.predicted_label is Label.REAL for p in fake) / len(fake)
    frr = sum(p.predicted_label is Label.FAKE for p in real) / len(real)
    return far, frr


def auc_roc(preds: Sequence[LabeledPrediction]) -> float:
    """P(score of a random Real > score of a random Fake), ties counted one half.

    Computed from average ranks (Mann-Whitney U), O(n log n).
    """
    real, fake = _split(preds)
    scores = np.array([p.score for p in real] + [p.score for p in fake])
    ranks = rankdata(scores)
    n_r, n_f = len(real), len(fake)
    u = ranks[:n_r].sum() - n_r * (n_r + 1) / 2
    return float(u / (n_r * n_f))


def tokens(text: str) -> set[str]:
    """Case-folded whitespace tokens with punctuation and symbol characters removed."""
    stripped = "".join(ch for ch in text.casefold() if unicodedata.category(ch)[0] not in "PS")
    return set(stripped.split())


def evidence_hits(slots: Iterable[str], annotation: EvidenceAnnotation) -> bool:
    gold = set().union(*(tokens(s) for s in annotation.slots)) if annotation.slots else set()
    return any(tokens(s) & gold for s in slots)


def hit_at_k(reports: Sequence[EvidenceReport], annotations: Sequence[EvidenceAnnotation], k: int = 10) -> float:
    """Fraction of reports with at least one hitting item among their ``k`` top-ranked queries."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not reports:
        raise EmptyInput("no reports")
    by_id = {a.sample_id: a for a in annotations}
    hits = 0
    for rep in reports:
        try:
            ann = by_id[rep.sample_id]
        except KeyError:
            raise MissingAnnotation(rep.sample_id) from None
        hits += any(evidence_hits(row.slots, ann) for row in rep.ranked_rows()[:k])
    return hits / len(reports)


def load_annotations(path: str | Path) -> list[EvidenceAnnotation]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append(EvidenceAnnotation(rec["id"], tuple(rec["slots"])))
    return out


def metrics_report(
    preds: Sequence[LabeledPrediction],
    reports: Sequence[EvidenceReport] | None = None,
    annotations: Sequence[EvidenceAnnotation] | None = None,
    k: int = 10,
) -> dict[str, Any]:
    """All detection metrics plus HIT@k over the annotated subset when annotations are given."""
    far, frr = far_frr(preds)
    out: dict[str, Any] = {
        "accuracy": accuracy(preds),
        "auc_roc": auc_roc(preds),
        "far": far,
        "frr": frr,
        "counts": {
            "n": len(preds),
            "real": sum(p.true_label is Label.REAL for p in preds),
            "fake": sum(p.true_label is Label.FAKE for p in preds),
        },
    }
    if annotations is not None and reports is not None:
        ids = {a.sample_id for a in annotations}
        annotated = [r for r in reports if r.sample_id in ids]
        out[f"hit_at_{k}"] = hit_at_k(annotated, annotations, k) if annotated else None
        out["counts"]["annotated"] = len(annotated)
    return out
