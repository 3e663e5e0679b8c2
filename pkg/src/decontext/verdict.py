"""Evidence selection, vote counting, and per-sample evidence reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Any, Mapping, Sequence

from decontext.extraction import ElementaryStatement, Query, StatementKind
from decontext.labels import Answer, Label
from decontext.oracle import QueryAnswer

DEFAULT_K = 10


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ScoredQuery:
    query: Query
    answer: QueryAnswer
    p_s: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.p_s) and 0.0 <= self.p_s <= 1.0):
            raise ValueError(f"p_s must be in [0, 1], got {self.p_s}")

    @property
    def index(self) -> int:
        return self.query.index


@dataclass(frozen=True)
class Verdict:
    label: Label
    score: float
    selected: tuple[ScoredQuery, ...]
    supporting: tuple[ScoredQuery, ...]


def select_evidence(scored: Sequence[ScoredQuery], k: int = DEFAULT_K) -> list[ScoredQuery]:
    """Top-``k`` by ``p_s``; ties go to the lower query index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return sorted(scored, key=lambda s: (-s.p_s, s.index))[:k]


def predict(selected: Sequence[ScoredQuery]) -> Verdict:
    """Majority vote of the selected answers. Ties, including no evidence, are Fake."""
    yes = sum(1 for s in selected if s.answer.answer is Answer.YES)
    no = len(selected) - yes
    label = Label.REAL if yes > no else Label.FAKE
    agree = Answer.YES if label is Label.REAL else Answer.NO
    return Verdict(
        label=label,
        score=yes / len(selected) if selected else 0.0,
        selected=tuple(selected),
        supporting=tuple(s for s in selected if s.answer.answer is agree),
    )


@dataclass(frozen=True)
class ReportRow:
    index: int
    text: str
    kind: StatementKind
    x: str
    y: str | None
    z: str | None
    answer: Answer
    raw_score: float
    p_s: float
    selected: bool

    @property
    def slots(self) -> tuple[str, ...]:
        return tuple(s for s in (self.x, self.y, self.z) if s is not None)


@dataclass(frozen=True)
class EvidenceReport:
    sample_id: str
    caption: str
    image: str
    label: Label
    score: float
    evidence: tuple[int, ...]    # selected query indices, rank order
    supporting: tuple[int, ...]  # subset of evidence agreeing with the label, rank order
    rows: tuple[ReportRow, ...]  # one per extracted query, index order

    def ranked_rows(self) -> list[ReportRow]:
        """All rows ordered as evidence selection ranks them."""
        return sorted(self.rows, key=lambda r: (-r.p_s, r.index))

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.sample_id,
            "caption": self.caption,
            "image": self.image,
            "verdict": {
                "label": self.label.value,
                "score": self.score,
                "evidence": list(self.evidence),
                "supporting": list(self.supporting),
            },
            "queries": [
                {
                    "index": r.index,
                    "text": r.text,
                    "kind": r.kind.value,
                    "x": r.x,
                    "y": r.y,
                    "z": r.z,
                    "answer": r.answer.value,
                    "raw_score": r.raw_score,
                    "p_s": r.p_s,
                    "selected": r.selected,
                }
                for r in self.rows
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> EvidenceReport:
        v = d["verdict"]
        rows = tuple(
            ReportRow(
                q["index"], q["text"], StatementKind(q["kind"]), q["x"], q["y"], q["z"],
                Answer(q["answer"]), q["raw_score"], q["p_s"], q["selected"],
            )
            for q in d["queries"]
        )
        return cls(d["id"], d["caption"], d["image"], Label(v["label"]), v["score"],
                   tuple(v["evidence"]), tuple(v["supporting"]), rows)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    def render_text(self) -> str:
        by_index = {r.index: r for r in self.rows}
        lines = [f"{self.sample_id}: {self.label.value} (score={self.score:.2f}) {self.caption}"]
        for i in self.evidence:
            r = by_index[i]
            lines.append(f"[p_s={r.p_s:.2f}] ANSWER={r.answer.value} — {r.text}")
        return "\n".join(lines)


def build_report(
    sample_id: str,
    caption: str,
    image: str,
    queries: Sequence[Query],
    answers: Sequence[QueryAnswer],
    p_s: Sequence[float],
    verdict: Verdict,
) -> EvidenceReport:
    if not (len(queries) == len(answers) == len(p_s)):
        raise LengthMismatch(f"{len(queries)} queries, {len(answers)} answers, {len(p_s)} p_s values")
    indices = [q.index for q in queries]
    if len(set(indices)) != len(indices):
        raise LengthMismatch(f"duplicate query indices in {indices}")
    chosen = {s.index for s in verdict.selected}
    if not chosen <= set(indices):
        raise LengthMismatch("verdict selects queries absent from the table")
    rows = []
    for q, a, p in sorted(zip(queries, answers, p_s), key=lambda t: t[0].index):
        st: ElementaryStatement = q.statement
        rows.append(ReportRow(q.index, q.text, st.kind, st.x, st.y, st.z, a.answer, a.raw_score, float(p), q.index in chosen))
    return EvidenceReport(
        sample_id, caption, image, verdict.label, verdict.score,
        tuple(s.index for s in verdict.selected), tuple(s.index for s in verdict.supporting), tuple(rows),
    )


def decide(queries: Sequence[Query], answers: Sequence[QueryAnswer], p_s: Sequence[float], k: int = DEFAULT_K) -> Verdict:
    if not (len(queries) == len(answers) == len(p_s)):
        raise LengthMismatch(f"{len(queries)} queries, {len(answers)} answers, {len(p_s)} p_s values")
    scored = [ScoredQuery(q, a, float(p)) for q, a, p in zip(queries, answers, p_s)]
    return predict(select_evidence(scored, k))


def report_schema() -> dict[str, Any]:
    """JSON Schema for serialised evidence reports."""
    text = resources.files("decontext").joinpath("schemas/evidence_report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)
