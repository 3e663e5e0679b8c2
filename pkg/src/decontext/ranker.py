"""Query ranker: embedding fusion, four-way (credibility, answer) classifier, SGD training.

Forward pass for one (query, caption, image) embedding triple::

    h_qb = h_q * h_v
    h_cb = h_c * h_v
    m    = W2 @ tanh(W1 @ h_cb + b1) + b2      # mapping MLP
    h_f  = h_qb * m
    p    = softmax(Wf @ h_f + bf)

Class order is (Real, Yes), (Fake, No), (Real, No), (Fake, Yes); the
probability that a query is supportive is ``p[0] + p[1]``.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import numpy as np

from decontext.labels import Answer, Label
from decontext.oracle import post_json

log = logging.getLogger(__name__)

N_CLASSES = 4
MODEL_FORMAT = "decontext.ranker"
MODEL_VERSION = 1

PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wf", "bf")


class RankerError(ValueError):
    pass


class DimensionMismatch(RankerError):
    pass


class EmptyTrainingSet(RankerError):
    pass


class NonFiniteLoss(RankerError, ArithmeticError):
    pass


@dataclass(frozen=True)
class EmbeddingTriple:
    h_q: np.ndarray
    h_c: np.ndarray
    h_v: np.ndarray

    def __post_init__(self) -> None:
        arrs = [np.asarray(a, dtype=np.float64) for a in (self.h_q, self.h_c, self.h_v)]
        if any(a.ndim != 1 for a in arrs) or len({a.shape for a in arrs}) != 1:
            raise DimensionMismatch(f"embedding shapes differ: {[a.shape for a in arrs]}")
        if not all(np.isfinite(a).all() for a in arrs):
            raise RankerError("embedding contains non-finite values")
        for name, a in zip(("h_q", "h_c", "h_v"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def dim(self) -> int:
        return self.h_q.shape[0]


def label_index(answer: Answer, label: Label) -> int:
    """Map (oracle answer, pair label) to the classifier's target class."""
    answer, label = Answer(answer), Label(label)
    if label is Label.REAL:
        return 0 if answer is Answer.YES else 2
    return 1 if answer is Answer.NO else 3


@dataclass(frozen=True)
class TrainSample:
    triple: EmbeddingTriple
    answer: Answer
    label: Label

    @property
    def target(self) -> int:
        return label_index(self.answer, self.label)


@dataclass
class RankerModel:
    W1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (D, H)
    b2: np.ndarray  # (D,)
    Wf: np.ndarray  # (4, D)
    bf: np.ndarray  # (4,)
    seed: int | None = None

    @property
    def D(self) -> int:
        return self.W1.shape[1]

    @property
    def H(self) -> int:
        return self.W1.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> RankerModel:
        return RankerModel(**{k: v.copy() for k, v in self.params().items()}, seed=self.seed)

    def validate(self) -> None:
        D, H = self.D, self.H
        shapes = {"W1": (H, D), "b1": (H,), "W2": (D, H), "b2": (D,), "Wf": (N_CLASSES, D), "bf": (N_CLASSES,)}
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise RankerError(f"{name} contains non-finite values")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "D": self.D, "H": self.H, "seed": self.seed}
        for name, arr in self.params().items():
            out[name] = arr.tolist()
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RankerModel:
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise RankerError(f"not a {MODEL_FORMAT} v{MODEL_VERSION} document")
        model = cls(**{name: np.array(d[name], dtype=np.float64) for name in PARAM_NAMES}, seed=d.get("seed"))
        if (model.D, model.H) != (d["D"], d["H"]):
            raise DimensionMismatch("declared D/H disagree with matrix shapes")
        model.validate()
        return model


def init_model(D: int, H: int | None = None, seed: int = 0) -> RankerModel:
    """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation; ``H`` defaults to ``D``."""
    H = D if H is None else H
    if D < 1 or H < 1:
        raise ValueError("D and H must be positive")
    rng = np.random.default_rng(seed)

    def u(shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return RankerModel(
        W1=u((H, D), D), b1=u((H,), D),
        W2=u((D, H), H), b2=u((D,), H),
        Wf=u((N_CLASSES, D), D), bf=u((N_CLASSES,), D),
        seed=seed,
    )


def save_model(model: RankerModel, path: str | Path, meta: Mapping[str, Any] | None = None) -> None:
    doc = model.to_dict()
    if meta:
        doc["meta"] = dict(meta)
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> tuple[RankerModel, dict[str, Any]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return RankerModel.from_dict(doc), doc.get("meta", {})


# --- inference -------------------------------------------------------------

def _as_arrays(t: EmbeddingTriple | Sequence[EmbeddingTriple]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(t, EmbeddingTriple):
        return t.h_q, t.h_c, t.h_v
    return (np.stack([x.h_q for x in t]), np.stack([x.h_c for x in t]), np.stack([x.h_v for x in t]))


def fuse(t: EmbeddingTriple | Sequence[EmbeddingTriple], m: RankerModel) -> np.ndarray:
    """Fused vector ``h_f``; accepts one triple (returns shape (D,)) or a sequence (returns (N, D))."""
    h_q, h_c, h_v = _as_arrays(t)
    if h_q.shape[-1] != m.D:
        raise DimensionMismatch(f"embedding dim {h_q.shape[-1]} != model dim {m.D}")
    h_cb = h_c * h_v
    mapped = np.tanh(h_cb @ m.W1.T + m.b1) @ m.W2.T + m.b2
    return (h_q * h_v) * mapped


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def classify(h_f: np.ndarray, m: RankerModel) -> np.ndarray:
    h_f = np.asarray(h_f, dtype=np.float64)
    if h_f.shape[-1] != m.D:
        raise DimensionMismatch(f"fused dim {h_f.shape[-1]} != model dim {m.D}")
    return softmax(h_f @ m.Wf.T + m.bf)


def support_prob(p: np.ndarray) -> float | np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    s = np.clip(p[..., 0] + p[..., 1], 0.0, 1.0)
    return float(s) if s.ndim == 0 else s


def support_probs(triples: Sequence[EmbeddingTriple], m: RankerModel) -> np.ndarray:
    if not triples:
        return np.zeros(0)
    return support_prob(classify(fuse(list(triples), m), m))


# --- training --------------------------------------------------------------

def loss_and_grads(m: RankerModel, t: EmbeddingTriple, target: int) -> tuple[float, dict[str, np.ndarray]]:
    """Cross-entropy of ``target`` and its gradient w.r.t. every model parameter."""
    h_qb = t.h_q * t.h_v
    h_cb = t.h_c * t.h_v
    a1 = np.tanh(m.W1 @ h_cb + m.b1)
    mapped = m.W2 @ a1 + m.b2
    h_f = h_qb * mapped
    logits = m.Wf @ h_f + m.bf
    shift = logits.max()
    lse = shift + math.log(np.exp(logits - shift).sum())
    loss = lse - logits[target]

    dlogits = np.exp(logits - lse)
    dlogits[target] -= 1.0
    dh_f = m.Wf.T @ dlogits
    dmapped = dh_f * h_qb
    dz1 = (m.W2.T @ dmapped) * (1.0 - a1 * a1)
    grads = {
        "Wf": np.outer(dlogits, h_f),
        "bf": dlogits,
        "W2": np.outer(dmapped, a1),
        "b2": dmapped,
        "W1": np.outer(dz1, h_cb),
        "b1": dz1,
    }
    return float(loss), grads


def cross_entropy(m: RankerModel, t: EmbeddingTriple, target: int) -> float:
    logits = fuse(t, m) @ m.Wf.T + m.bf
    shift = logits.max()
    return float(shift + math.log(np.exp(logits - shift).sum()) - logits[target])


@dataclass(frozen=True)
class Hyperparameters:
    lr: float = 0.05
    epochs: int = 30
    shuffle_seed: int = 0


@dataclass
class TrainResult:
    model: RankerModel
    losses: list[float] = field(default_factory=list)


def train(
    samples: Sequence[TrainSample],
    m: RankerModel,
    hp: Hyperparameters = Hyperparameters(),
    on_epoch: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Per-sample SGD on cross-entropy; ``m`` is left untouched and an updated copy is returned.

    Raises :class:`NonFiniteLoss` as soon as a loss or parameter goes non-finite.
    """
    if not samples:
        raise EmptyTrainingSet("no training samples")
    if not hp.lr >= 0:
        raise ValueError(f"learning rate must be >= 0, got {hp.lr}")
    for s in samples:
        if s.triple.dim != m.D:
            raise DimensionMismatch(f"sample dim {s.triple.dim} != model dim {m.D}")

    model = m.copy()
    params = model.params()
    targets = [s.target for s in samples]
    rng = np.random.default_rng(hp.shuffle_seed)
    losses: list[float] = []
    t0 = time.perf_counter()
    for epoch in range(hp.epochs):
        total = 0.0
        for i in rng.permutation(len(samples)):
            with np.errstate(over="ignore", invalid="ignore"):  # divergence is checked explicitly below
                value, grads = loss_and_grads(model, samples[i].triple, targets[i])
            if not math.isfinite(value):
                raise NonFiniteLoss(f"epoch {epoch}, sample {i}: loss={value}")
            total += value
            if hp.lr:
                for name, g in grads.items():
                    params[name] -= hp.lr * g
        mean = total / len(samples)
        if not all(np.isfinite(p).all() for p in params.values()):
            raise NonFiniteLoss(f"epoch {epoch}: parameters diverged (mean loss {mean})")
        losses.append(mean)
        log.debug("epoch %d mean loss %.6f (%.2fs)", epoch, mean, time.perf_counter() - t0)
        if on_epoch is not None:
            on_epoch(epoch, mean)
    return TrainResult(model, losses)


def accuracy(samples: Sequence[TrainSample], m: RankerModel) -> float:
    """Fraction of samples whose arg-max class equals the mapped target."""
    if not samples:
        raise EmptyTrainingSet("no samples")
    p = classify(fuse([s.triple for s in samples], m), m)
    return float(np.mean(p.argmax(axis=1) == np.array([s.target for s in samples])))


# --- gradient check ---------------------------------------------------------

def grad_check(m: RankerModel, sample: TrainSample, delta: float = 1e-5, floor: float = 1e-8) -> float:
    """Max element-wise relative error between analytic and central-difference gradients.

    Relative error is ``|a - n| / max(|a| + |n|, floor)``; ``floor`` keeps
    components that are zero on both sides from dividing by zero.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    target = sample.target
    _, analytic = loss_and_grads(m, sample.triple, target)
    probe = m.copy()
    worst = 0.0
    for name, arr in probe.params().items():
        a = analytic[name]
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + delta
            plus = cross_entropy(probe, sample.triple, target)
            arr[idx] = orig - delta
            minus = cross_entropy(probe, sample.triple, target)
            arr[idx] = orig
            numeric = (plus - minus) / (2 * delta)
            err = abs(a[idx] - numeric) / max(abs(a[idx]) + abs(numeric), floor)
            worst = max(worst, err)
    return worst


# --- encoders ----------------------------------------------------------------

class EncoderInterface(Protocol):
    dim: int

    def embed(self, image: str, caption: str, query: str) -> EmbeddingTriple: ...


class FixtureEncoder:
    """Lookup table ``(image, caption, query) -> EmbeddingTriple``."""

    def __init__(self, table: Mapping[tuple[str, str, str], EmbeddingTriple]):
        self.table = dict(table)
        dims = {t.dim for t in self.table.values()}
        if len(dims) > 1:
            raise DimensionMismatch(f"fixture mixes embedding dims {sorted(dims)}")
        self.dim = dims.pop() if dims else 0

    def embed(self, image: str, caption: str, query: str) -> EmbeddingTriple:
        try:
            return self.table[(image, caption, query)]
        except KeyError:
            raise KeyError(f"no fixture embedding for image={image!r} query={query!r}") from None

    @classmethod
    def from_jsonl(cls, path: str | Path) -> FixtureEncoder:
        table = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    r = json.loads(line)
                    table[(r["image"], r["caption"], r["query"])] = EmbeddingTriple(r["h_q"], r["h_c"], r["h_v"])
        return cls(table)


class RemoteEncoder:
    """HTTP client: POST ``{"image", "caption", "query"}``, expects ``{"h_q", "h_c", "h_v"}``."""

    def __init__(self, url: str, dim: int, timeout: float = 10.0, headers: Mapping[str, str] | None = None,
                 retries: int = 3, backoff: float = 0.2, sleep: Callable[[float], None] = time.sleep):
        self.url = url
        self.dim = dim
        self.timeout = timeout
        self.headers = dict(headers or {})
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep

    def embed(self, image: str, caption: str, query: str) -> EmbeddingTriple:
        body = post_json(self.url, {"image": image, "caption": caption, "query": query},
                         self.headers, self.timeout, self.retries, self.backoff, self._sleep)
        try:
            t = EmbeddingTriple(body["h_q"], body["h_c"], body["h_v"])
        except (KeyError, TypeError) as exc:
            raise RankerError(f"malformed encoder response: {exc}") from exc
        if t.dim != self.dim:
            raise DimensionMismatch(f"encoder returned dim {t.dim}, expected {self.dim}")
        return t


def load_encoder(cfg: Mapping[str, Any]) -> EncoderInterface:
    kind = cfg.get("kind", "fixture")
    if kind == "fixture":
        return FixtureEncoder.from_jsonl(cfg["path"])
    if kind == "remote":
        return RemoteEncoder(cfg["url"], cfg["dim"], timeout=cfg.get("timeout", 10.0), headers=cfg.get("headers"))
    raise ValueError(f"unknown encoder kind {kind!r}")
