"""The pipeline stages: extract, answer, train, evaluate.

Each stage reads and writes JSON Lines files and returns a :class:`StageResult`
whose ``exit_code`` is 0 on success and 1 when some samples failed. Fatal
problems raise.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from decontext.extraction import extract_queries
from decontext.labels import Answer
from decontext.metrics import LabeledPrediction, load_annotations, metrics_report
from decontext.oracle import AnswerCache, QueryAnswer, batch_answer, load_backend
from decontext.pipeline.config import PipelineConfig
from decontext.pipeline.records import (
    Sample,
    StageError,
    query_from_dict,
    query_to_dict,
    read_dataset,
    read_stage,
    stage_header,
    write_jsonl,
)
from decontext.ranker import (
    EmptyTrainingSet,
    TrainSample,
    accuracy,
    init_model,
    load_encoder,
    load_model,
    save_model,
    support_probs,
    train,
)
from decontext.verdict import build_report, decide

log = logging.getLogger(__name__)


@dataclass
class StageResult:
    ok: int = 0
    failed: list[str] = field(default_factory=list)
    outputs: dict[str, Any] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0


def cmd_extract(dataset: str | Path, out: str | Path, cfg: PipelineConfig) -> StageResult:
    samples, errors = read_dataset(dataset)
    result = StageResult(failed=[f"line {n}: {msg}" for n, msg in errors])
    records = []
    for s in samples:
        queries = extract_queries(s.graph)
        records.append({"id": s.id, "image": s.image, "caption": s.caption, "queries": [query_to_dict(q) for q in queries]})
    result.ok = write_jsonl(out, records, stage_header("extract", cfg.stage_hash("extract"), cfg.seed))
    result.outputs["queries"] = str(out)
    return result


def cmd_answer(queries: str | Path, out: str | Path, cfg: PipelineConfig) -> StageResult:
    _, records = read_stage(queries, "extract")
    backend = load_backend({**cfg.oracle, "oracle_id": cfg.oracle_id()})
    cache = AnswerCache(cfg.cache_path)
    result = StageResult()
    out_records = []
    for rec in records:
        qs = [query_from_dict(q) for q in rec["queries"]]
        answers = batch_answer(backend, rec["image"], qs, cfg.tau_ans, cfg.max_inflight, cache, return_exceptions=True)
        rows = []
        for q, a in zip(qs, answers):
            row = query_to_dict(q)
            if isinstance(a, QueryAnswer):
                row.update(status="ok", answer=a.answer.value, raw_score=a.raw_score, oracle_id=a.oracle_id)
            else:
                row.update(status="error", error=f"{type(a).__name__}: {a}")
            rows.append(row)
        n_err = sum(r["status"] == "error" for r in rows)
        if n_err:
            log.error("%s: %d of %d queries unanswered", rec["id"], n_err, len(rows))
            result.failed.append(rec["id"])
        out_records.append({"id": rec["id"], "image": rec["image"], "caption": rec["caption"], "answers": rows})
    result.ok = write_jsonl(out, out_records, stage_header("answer", cfg.stage_hash("answer"), cfg.seed))
    result.outputs["answers"] = str(out)
    return result


def _answered(rec: dict[str, Any]) -> list[dict[str, Any]]:
    return [a for a in rec["answers"] if a["status"] == "ok"]


def _load_samples(dataset: str | Path, split: str) -> list[Sample]:
    samples, errors = read_dataset(dataset)
    if errors:
        raise StageError(f"{dataset}: {len(errors)} malformed records (first: line {errors[0][0]}: {errors[0][1]})")
    picked = [s for s in samples if split == "all" or s.split == split]
    unlabeled = [s.id for s in picked if s.label is None]
    if unlabeled:
        raise StageError(f"{len(unlabeled)} samples in split {split!r} have no label (e.g. {unlabeled[0]})")
    return picked


def cmd_train(dataset: str | Path, answers: str | Path, out: str | Path, cfg: PipelineConfig) -> StageResult:
    samples = _load_samples(dataset, cfg.train_split)
    _, records = read_stage(answers, "answer", cfg.stage_hash("answer"))
    by_id = {r["id"]: r for r in records}
    encoder = load_encoder(cfg.encoder)
    result = StageResult()

    train_set: list[TrainSample] = []
    for s in samples:
        rec = by_id.get(s.id)
        if rec is None:
            log.error("%s: no answers", s.id)
            result.failed.append(s.id)
            continue
        for a in _answered(rec):
            t = encoder.embed(s.image, s.caption, a["text"])
            train_set.append(TrainSample(t, Answer(a["answer"]), s.label))
    if not train_set:
        raise EmptyTrainingSet(f"no answered queries in split {cfg.train_split!r}")

    model = init_model(encoder.dim, cfg.hidden, seed=cfg.seed)
    trained = train(train_set, model, cfg.hyperparameters,
                    on_epoch=lambda e, l: log.info("epoch %d loss %.6f", e, l))
    train_acc = accuracy(train_set, trained.model)
    meta = {
        "stage": "train",
        "config_hash": cfg.stage_hash("train"),
        "seed": cfg.seed,
        "n_samples": len(train_set),
        "losses": trained.losses,
        "train_accuracy": train_acc,
    }
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_model(trained.model, out, meta)
    result.ok = len(samples) - len(result.failed)
    result.outputs.update(model=str(out), losses=trained.losses, train_accuracy=train_acc)
    return result


def cmd_evaluate(
    dataset: str | Path,
    answers: str | Path,
    model: str | Path | None,
    out_dir: str | Path,
    cfg: PipelineConfig,
    annotations: str | Path | None = None,
) -> StageResult:
    samples = _load_samples(dataset, cfg.eval_split)
    _, records = read_stage(answers, "answer", cfg.stage_hash("answer"))
    by_id = {r["id"]: r for r in records}

    ranker = encoder = None
    if cfg.use_ranker:
        if model is None:
            raise StageError("a model file is required unless use_ranker is false")
        ranker, meta = load_model(model)
        if meta.get("config_hash") != cfg.stage_hash("train"):
            raise StageError(
                f"{model}: trained under config {meta.get('config_hash')}, current config is {cfg.stage_hash('train')}"
            )
        encoder = load_encoder(cfg.encoder)

    result = StageResult()
    reports, preds = [], []
    for s in samples:
        rec = by_id.get(s.id)
        if rec is None:
            log.error("%s: no answers", s.id)
            result.failed.append(s.id)
            continue
        rows = _answered(rec)
        if len(rows) != len(rec["answers"]):
            result.failed.append(s.id)
        queries = [query_from_dict(r) for r in rows]
        qa = [QueryAnswer(Answer(r["answer"]), r["raw_score"], r["oracle_id"]) for r in rows]
        if ranker is not None:
            p_s = support_probs([encoder.embed(s.image, s.caption, q.text) for q in queries], ranker).tolist()
        else:
            p_s = [0.5] * len(queries)
        verdict = decide(queries, qa, p_s, cfg.k)
        reports.append(build_report(s.id, s.caption, s.image, queries, qa, p_s, verdict))
        preds.append(LabeledPrediction(s.label, verdict.label, verdict.score))

    ann = load_annotations(annotations) if annotations is not None else None
    metrics = metrics_report(preds, reports, ann, cfg.k)
    out_dir = Path(out_dir)
    header = stage_header("evaluate", cfg.stage_hash("train") if cfg.use_ranker else cfg.stage_hash("answer"), cfg.seed)
    write_jsonl(out_dir / "reports.jsonl", (r.to_dict() for r in reports), header)
    (out_dir / "evidence.txt").write_text("".join(r.render_text() + "\n\n" for r in reports), encoding="utf-8")
    doc = {**header, "split": cfg.eval_split, "k": cfg.k, "use_ranker": cfg.use_ranker, "metrics": metrics}
    (out_dir / "metrics.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    result.ok = len(reports)
    result.outputs.update(metrics=metrics, reports=reports)
    return result


def run_pipeline(
    dataset: str | Path,
    workdir: str | Path,
    cfg: PipelineConfig,
    annotations: str | Path | None = None,
) -> dict[str, Any]:
    """Run extract, answer, train and evaluate into ``workdir``; returns the metrics dict."""
    w = Path(workdir)
    w.mkdir(parents=True, exist_ok=True)
    for step in (
        lambda: cmd_extract(dataset, w / "queries.jsonl", cfg),
        lambda: cmd_answer(w / "queries.jsonl", w / "answers.jsonl", cfg),
    ):
        res = step()
        if res.exit_code:
            raise StageError(f"stage failed for {res.failed}")
    model = None
    if cfg.use_ranker:
        cmd_train(dataset, w / "answers.jsonl", w / "model.json", cfg)
        model = w / "model.json"
    return cmd_evaluate(dataset, w / "answers.jsonl", model, w / "eval", cfg, annotations).outputs["metrics"]


__all__ = ["StageResult", "cmd_extract", "cmd_answer", "cmd_train", "cmd_evaluate", "run_pipeline"]
