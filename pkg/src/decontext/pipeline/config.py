from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from decontext.oracle import DEFAULT_TAU
from decontext.ranker import Hyperparameters
from decontext.verdict import DEFAULT_K


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Settings shared by every stage.

    ``oracle`` and ``encoder`` are backend descriptions understood by
    :func:`decontext.oracle.load_backend` and :func:`decontext.ranker.load_encoder`.
    """

    seed: int = 0
    tau_ans: float = DEFAULT_TAU
    k: int = DEFAULT_K
    use_ranker: bool = True
    lr: float = 0.05
    epochs: int = 30
    hidden: int | None = None
    max_inflight: int = 4
    train_split: str = "train"
    eval_split: str = "test"
    oracle: Mapping[str, Any] = field(default_factory=lambda: {"kind": "fixture", "path": "oracle_fixture.jsonl"})
    encoder: Mapping[str, Any] = field(default_factory=lambda: {"kind": "fixture", "path": "embeddings.jsonl"})
    cache_path: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau_ans <= 1.0:
            raise ConfigError(f"tau_ans must be in [0, 1], got {self.tau_ans}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.lr < 0 or self.epochs < 0:
            raise ConfigError("lr and epochs must be non-negative")
        if self.max_inflight < 1:
            raise ConfigError("max_inflight must be >= 1")
        if self.hidden is not None and self.hidden < 1:
            raise ConfigError("hidden must be >= 1")

    @property
    def hyperparameters(self) -> Hyperparameters:
        return Hyperparameters(lr=self.lr, epochs=self.epochs, shuffle_seed=self.seed)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["oracle"], d["encoder"] = dict(self.oracle), dict(self.encoder)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], base_dir: str | Path | None = None) -> PipelineConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        cfg = cls(**d)
        return cfg.resolve(base_dir) if base_dir is not None else cfg

    def resolve(self, base_dir: str | Path) -> PipelineConfig:
        """Make relative file paths absolute with respect to ``base_dir``."""
        base = Path(base_dir)

        def fix(section: Mapping[str, Any]) -> dict[str, Any]:
            out = dict(section)
            if "path" in out and not Path(out["path"]).is_absolute():
                out["path"] = str(base / out["path"])
            return out

        cache = self.cache_path
        if cache is not None and not Path(cache).is_absolute():
            cache = str(base / cache)
        return replace(self, oracle=fix(self.oracle), encoder=fix(self.encoder), cache_path=cache)

    # -- provenance --------------------------------------------------------

    def oracle_id(self) -> str:
        o = self.oracle
        if o.get("oracle_id"):
            return o["oracle_id"]
        if o.get("kind", "fixture") == "fixture":
            return f"fixture:{Path(o['path']).name}"
        return f"remote:{o['url']}"

    def encoder_id(self) -> str:
        e = self.encoder
        if e.get("kind", "fixture") == "fixture":
            return f"fixture:{Path(e['path']).name}"
        return f"remote:{e['url']}"

    def stage_fingerprint(self, stage: str) -> dict[str, Any]:
        """Settings that determine the content of a stage's output file.

        Machine-specific values (absolute paths, cache location, concurrency)
        are left out so that artifacts stay comparable across hosts.
        """
        if stage == "extract":
            return {"stage": "extract"}
        answer = {"stage": "answer", "tau_ans": self.tau_ans, "oracle_id": self.oracle_id()}
        if stage == "answer":
            return answer
        if stage == "train":
            return {
                "stage": "train",
                "answer": answer,
                "encoder_id": self.encoder_id(),
                "seed": self.seed,
                "lr": self.lr,
                "epochs": self.epochs,
                "hidden": self.hidden,
                "train_split": self.train_split,
            }
        raise ConfigError(f"unknown stage {stage!r}")

    def stage_hash(self, stage: str) -> str:
        blob = json.dumps(self.stage_fingerprint(stage), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path: str | Path | None, **overrides: Any) -> PipelineConfig:
    """Read a JSON or TOML config (by extension); relative paths resolve against its directory."""
    if path is None:
        data: dict[str, Any] = {}
        base = Path.cwd()
    else:
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        try:
            data = tomllib.loads(text) if path.suffix.lower() == ".toml" else json.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base = path.parent
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return PipelineConfig.from_dict(data, base_dir=base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
