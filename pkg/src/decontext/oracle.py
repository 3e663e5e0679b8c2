"""Answering rendered queries against an image through a pluggable image-text scorer.

A backend only has to expose ``oracle_id`` and ``score(image, text) -> float``
in [0, 1]. Scores are turned into Yes/No with a fixed threshold and memoised
in an append-only JSON Lines cache.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence, Union

import numpy as np

from decontext.extraction import Query
from decontext.labels import Answer

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.5


class OracleError(RuntimeError):
    pass


class BackendUnavailable(OracleError):
    pass


class ScoreOutOfRange(OracleError, ValueError):
    pass


class BatchAnswerError(OracleError):
    """Raised by :func:`batch_answer` when some items failed; ``results`` holds the partial output."""

    def __init__(self, results: list):
        self.results = results
        failed = [i for i, r in enumerate(results) if isinstance(r, BaseException)]
        super().__init__(f"{len(failed)} of {len(results)} queries failed (indices {failed})")


@dataclass(frozen=True)
class QueryAnswer:
    answer: Answer
    raw_score: float
    oracle_id: str


class OracleBackend(Protocol):
    oracle_id: str

    def score(self, image: str, text: str) -> float: ...


def _check_score(value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScoreOutOfRange(f"score must be a number, got {value!r}")
    value = float(value)
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ScoreOutOfRange(f"score {value!r} outside [0, 1]")
    return value


class FixtureBackend:
    """Lookup table ``(image, text) -> score``."""

    def __init__(self, table: Mapping[tuple[str, str], float], oracle_id: str = "fixture"):
        self.table = dict(table)
        self.oracle_id = oracle_id

    def score(self, image: str, text: str) -> float:
        try:
            return self.table[(image, text)]
        except KeyError:
            raise KeyError(f"no fixture score for image={image!r} text={text!r}") from None

    @classmethod
    def from_jsonl(cls, path: str | Path, oracle_id: str | None = None) -> FixtureBackend:
        table = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    table[(rec["image"], rec["text"])] = rec["score"]
        return cls(table, oracle_id or f"fixture:{Path(path).name}")


def _derived_rng(seed: int, *parts: str) -> np.random.Generator:
    # per-key stream, so results do not depend on call order or threading
    digest = hashlib.sha256("\x1f".join((str(seed),) + parts).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


class NoisyPlantedBackend:
    """Planted yes/no truth with independent Bernoulli(noise) flips per (image, text).

    Yes answers score in [0.55, 1], No answers in [0, 0.45), so any threshold
    in between recovers the (possibly flipped) planted answer.
    """

    def __init__(
        self,
        truth: Mapping[tuple[str, str], bool],
        noise: float = 0.0,
        seed: int = 0,
        oracle_id: str | None = None,
    ):
        if not 0.0 <= noise <= 1.0:
            raise ValueError(f"noise must be in [0, 1], got {noise}")
        self.truth = dict(truth)
        self.noise = noise
        self.seed = seed
        self.oracle_id = oracle_id or f"planted:eps={noise}:seed={seed}"

    def _draw(self, image: str, text: str) -> tuple[bool, float]:
        rng = _derived_rng(self.seed, image, text)
        flip, u = rng.random(2)
        return bool(flip < self.noise), float(u)

    def flipped(self, image: str, text: str) -> bool:
        return self._draw(image, text)[0]

    def score(self, image: str, text: str) -> float:
        planted = self.truth[(image, text)]
        flip, u = self._draw(image, text)
        if planted != flip:
            return 0.55 + 0.45 * u
        return 0.45 * u


class RemoteBackend:
    """HTTP client: POST ``{"image", "text"}``, expects ``{"score": number}``.

    Transport failures are retried ``retries`` times in total with exponential
    backoff starting at ``backoff`` seconds.
    """

    def __init__(
        self,
        url: str,
        timeout: float = 10.0,
        headers: Mapping[str, str] | None = None,
        retries: int = 3,
        backoff: float = 0.2,
        oracle_id: str | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = url
        self.timeout = timeout
        self.headers = dict(headers or {})
        self.retries = retries
        self.backoff = backoff
        self.oracle_id = oracle_id or f"remote:{url}"
        self._sleep = sleep

    def _post(self, payload: dict) -> dict:
        return post_json(self.url, payload, self.headers, self.timeout, self.retries, self.backoff, self._sleep)

    def score(self, image: str, text: str) -> float:
        body = self._post({"image": image, "text": text})
        if not isinstance(body, dict) or "score" not in body:
            raise BackendUnavailable(f"malformed response from {self.url}: {body!r}")
        return body["score"]


def post_json(
    url: str,
    payload: dict,
    headers: Mapping[str, str],
    timeout: float,
    retries: int,
    backoff: float,
    sleep: Callable[[float], None] = time.sleep,
) -> Any:
    data = json.dumps(payload).encode("utf-8")
    last: Exception | None = None
    for attempt in range(retries):
        if attempt:
            sleep(backoff * 2 ** (attempt - 1))
        req = urllib.request.Request(
            url, data=data, method="POST", headers={"Content-Type": "application/json", **headers}
        )
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
            last = exc
            log.warning("POST %s failed (attempt %d/%d): %s", url, attempt + 1, retries, exc)
    raise BackendUnavailable(f"{url} unreachable after {retries} attempts: {last}")


class AnswerCache:
    """Score cache keyed by a content hash of (image, text, oracle_id).

    Backed by an append-only JSON Lines file when ``path`` is given; records
    are ``{"image", "text", "oracle_id", "score"}``.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._scores: dict[str, float] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._scores[self.key(rec["image"], rec["text"], rec["oracle_id"])] = rec["score"]

    @staticmethod
    def key(image: str, text: str, oracle_id: str) -> str:
        return hashlib.sha256(json.dumps([image, text, oracle_id]).encode("utf-8")).hexdigest()

    def get(self, image: str, text: str, oracle_id: str) -> float | None:
        return self._scores.get(self.key(image, text, oracle_id))

    def put(self, image: str, text: str, oracle_id: str, score: float) -> None:
        k = self.key(image, text, oracle_id)
        with self._lock:
            if k in self._scores:
                return
            self._scores[k] = score
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    rec = {"image": image, "text": text, "oracle_id": oracle_id, "score": score}
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._scores)


QueryLike = Union[Query, str]


def _text(q: QueryLike) -> str:
    return q if isinstance(q, str) else q.text


def threshold(score: float, tau: float, oracle_id: str) -> QueryAnswer:
    return QueryAnswer(Answer.YES if score >= tau else Answer.NO, score, oracle_id)


def _check_tau(tau: float) -> None:
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau_ans must be in [0, 1], got {tau}")


def answer_query(
    backend: OracleBackend,
    image: str,
    q: QueryLike,
    tau: float = DEFAULT_TAU,
    cache: AnswerCache | None = None,
) -> QueryAnswer:
    _check_tau(tau)
    if not image:
        raise ValueError("image reference must be non-empty")
    text = _text(q)
    raw = cache.get(image, text, backend.oracle_id) if cache is not None else None
    if raw is None:
        raw = _check_score(backend.score(image, text))
        if cache is not None:
            cache.put(image, text, backend.oracle_id, raw)
    return threshold(raw, tau, backend.oracle_id)


def batch_answer(
    backend: OracleBackend,
    image: str,
    queries: Sequence[QueryLike],
    tau: float = DEFAULT_TAU,
    max_inflight: int = 4,
    cache: AnswerCache | None = None,
    return_exceptions: bool = False,
) -> list:
    """Answer ``queries`` in order with at most ``max_inflight`` concurrent backend calls.

    The cache is consulted up front, so cached queries never reach the
    backend. Failed items are returned as exception instances when
    ``return_exceptions`` is true; otherwise :class:`BatchAnswerError` is
    raised carrying the partial results.
    """
    if max_inflight < 1:
        raise ValueError("max_inflight must be >= 1")
    _check_tau(tau)
    results: list = [None] * len(queries)
    pending: list[int] = []
    for i, q in enumerate(queries):
        raw = cache.get(image, _text(q), backend.oracle_id) if cache is not None else None
        if raw is None:
            pending.append(i)
        else:
            results[i] = threshold(raw, tau, backend.oracle_id)

    if pending:
        with ThreadPoolExecutor(max_workers=min(max_inflight, len(pending))) as pool:
            futures = {i: pool.submit(answer_query, backend, image, queries[i], tau, cache) for i in pending}
            for i, fut in futures.items():
                try:
                    results[i] = fut.result()
                except (OracleError, LookupError) as exc:
                    results[i] = exc

    if not return_exceptions and any(isinstance(r, BaseException) for r in results):
        raise BatchAnswerError(results)
    return results


def load_backend(cfg: Mapping[str, Any]) -> OracleBackend:
    """Build a backend from a config mapping (``kind`` = fixture | remote)."""
    kind = cfg.get("kind", "fixture")
    if kind == "fixture":
        return FixtureBackend.from_jsonl(cfg["path"], cfg.get("oracle_id"))
    if kind == "remote":
        return RemoteBackend(
            cfg["url"],
            timeout=cfg.get("timeout", 10.0),
            headers=cfg.get("headers"),
            oracle_id=cfg.get("oracle_id"),
        )
    raise ValueError(f"unknown oracle backend kind {kind!r}")
