"""Dataset records and JSON Lines stage files.

Every stage file starts with a header line::

    {"format": "decontext.stage", "version": 1, "stage": "...", "config_hash": "...", "seed": 0}

followed by one JSON object per sample.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from decontext.extraction import ElementaryStatement, Query, StatementKind
from decontext.graph import AmrGraph, GraphError, graph_to_dict, parse_graph
from decontext.labels import Label

log = logging.getLogger(__name__)

STAGE_FORMAT = "decontext.stage"
STAGE_VERSION = 1

_RECORD_KEYS = {"id", "caption", "image", "graph", "label", "split"}


class StageError(ValueError):
    pass


class ConfigMismatch(StageError):
    pass


@dataclass(frozen=True)
class Sample:
    id: str
    caption: str
    image: str
    graph: AmrGraph
    label: Label | None = None
    split: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise StageError("sample id must be non-empty")
        if not self.image:
            raise StageError(f"{self.id}: image reference must be non-empty")
        if self.graph.caption != self.caption:
            raise StageError(f"{self.id}: graph caption differs from sample caption")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Sample:
        if not isinstance(d, Mapping):
            raise StageError("dataset record must be a JSON object")
        unknown = set(d) - _RECORD_KEYS
        if unknown:
            raise StageError(f"unknown record keys {sorted(unknown)}")
        try:
            label = Label(d["label"]) if d.get("label") is not None else None
            return cls(str(d["id"]), d["caption"], d["image"], parse_graph(d["graph"]), label, d.get("split"))
        except KeyError as exc:
            raise StageError(f"record missing key {exc}") from exc
        except ValueError as exc:
            raise StageError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "caption": self.caption,
            "image": self.image,
            "graph": graph_to_dict(self.graph),
            "label": self.label.value if self.label is not None else None,
            "split": self.split,
        }


def dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False)


def write_jsonl(path: str | Path, records: Iterable[Mapping[str, Any]], header: Mapping[str, Any] | None = None) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header is not None:
            fh.write(dumps(header) + "\n")
        for rec in records:
            fh.write(dumps(rec) + "\n")
            n += 1
    return n


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield lineno, line


def read_dataset(path: str | Path) -> tuple[list[Sample], list[tuple[int, str]]]:
    """Parse a dataset file; returns the good samples and ``(line, error)`` for the bad ones."""
    samples: list[Sample] = []
    errors: list[tuple[int, str]] = []
    seen: set[str] = set()
    for lineno, line in iter_jsonl(path):
        try:
            sample = Sample.from_dict(json.loads(line))
            if sample.id in seen:
                raise StageError(f"duplicate sample id {sample.id!r}")
        except (json.JSONDecodeError, StageError, GraphError) as exc:
            log.error("%s:%d: %s", path, lineno, exc)
            errors.append((lineno, str(exc)))
            continue
        seen.add(sample.id)
        samples.append(sample)
    return samples, errors


def stage_header(stage: str, config_hash: str, seed: int) -> dict[str, Any]:
    return {"format": STAGE_FORMAT, "version": STAGE_VERSION, "stage": stage, "config_hash": config_hash, "seed": seed}


def read_stage(path: str | Path, stage: str, expect_hash: str | None = None) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    lines = iter_jsonl(path)
    try:
        _, first = next(lines)
    except StopIteration:
        raise StageError(f"{path}: empty stage file") from None
    header = json.loads(first)
    if header.get("format") != STAGE_FORMAT or header.get("stage") != stage:
        raise StageError(f"{path}: not a {stage!r} stage file")
    if expect_hash is not None and header.get("config_hash") != expect_hash:
        raise ConfigMismatch(
            f"{path}: produced under config {header.get('config_hash')}, current config is {expect_hash}"
        )
    return header, [json.loads(line) for _, line in lines]


def query_to_dict(q: Query) -> dict[str, Any]:
    s = q.statement
    return {
        "index": q.index,
        "kind": s.kind.value,
        "x": s.x,
        "y": s.y,
        "z": s.z,
        "source_nodes": list(s.source_nodes),
        "text": q.text,
    }


def query_from_dict(d: Mapping[str, Any]) -> Query:
    st = ElementaryStatement(StatementKind(d["kind"]), d["x"], d["y"], d["z"], tuple(d["source_nodes"]))
    return Query(st, d["text"], d["index"])
