"""Converter stub for NewsCLIPpings-style corpora.

NewsCLIPpings annotation files hold ``{"annotations": [pair, ...]}`` where a
pair is ``{"id", "image_id", "similarity_score", "falsified", "source_dataset"}``.
``id`` names the VisualNews item whose caption is used and ``image_id`` the
item whose image is shown; ``falsified`` marks a mismatched pair. VisualNews'
``data.json`` is a list of items ``{"id", "caption", "image_path", ...}``.

Field mapping into a dataset record::

    id      <- "{pair.id}-{pair.image_id}"
    caption <- visualnews[pair.id].caption
    image   <- visualnews[pair.image_id].image_path
    label   <- "Fake" if pair.falsified else "Real"
    split   <- the annotation file's split (train / val / test)
    graph   <- graph_for(caption), a tagged AMR graph document

No AMR parser is bundled; ``graph_for`` must come from the caller.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Callable, Mapping

from decontext.pipeline.records import Sample, StageError, write_jsonl

log = logging.getLogger(__name__)

GraphFn = Callable[[str], Mapping[str, Any]]


def newsclippings_record(
    pair: Mapping[str, Any],
    visualnews: Mapping[Any, Mapping[str, Any]],
    graph_for: GraphFn,
    split: str,
) -> dict[str, Any]:
    """One dataset record for one annotated pair; validated through :class:`Sample`."""
    caption = visualnews[pair["id"]]["caption"]
    rec = {
        "id": f"{pair['id']}-{pair['image_id']}",
        "caption": caption,
        "image": visualnews[pair["image_id"]]["image_path"],
        "graph": dict(graph_for(caption)),
        "label": "Fake" if pair["falsified"] else "Real",
        "split": split,
    }
    Sample.from_dict(rec)
    return rec


def convert_newsclippings(
    annotations: str | Path,
    visualnews: str | Path,
    graph_for: GraphFn,
    split: str,
    out: str | Path,
) -> int:
    """Write a dataset file for one split; pairs that fail to convert are logged and skipped."""
    pairs = json.loads(Path(annotations).read_text(encoding="utf-8"))["annotations"]
    items = {item["id"]: item for item in json.loads(Path(visualnews).read_text(encoding="utf-8"))}
    records = []
    for pair in pairs:
        try:
            records.append(newsclippings_record(pair, items, graph_for, split))
        except (KeyError, StageError) as exc:
            log.error("pair %s/%s skipped: %s", pair.get("id"), pair.get("image_id"), exc)
    return write_jsonl(out, records)
