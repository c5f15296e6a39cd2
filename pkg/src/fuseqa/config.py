"""Run configuration: a JSON document with fixed sections and full key
validation, so ablation configs stay diffable and reproducible."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .context import ContextConfig
from .model import ModelConfig
from .training import TrainConfig


class ConfigError(Exception):
    pass


@dataclass
class KGPaths:
    triples: str = ""
    templates: str = ""
    bundle: str = ""


@dataclass
class RetrievalConfig:
    max_hop: int = 3
    cap: int = 64


@dataclass
class ScoringConfig:
    lam: float = 0.5
    k: int = 16
    relf_mode: str = "frequency"
    score_text: str = "templated"
    encoder_dim: int = 64
    embedding_table: str = ""
    table_fallback: str = "pseudo"


@dataclass
class DataConfig:
    dataset: str = "synthetic"   # 'synthetic' or a path to a JSONL file
    test_dataset: str = ""
    n_train: int = 500
    n_test: int = 200
    kg_size: int = 40
    noise_edges: int = 1
    seed: int = 7


@dataclass
class RunConfig:
    kg: KGPaths = field(default_factory=KGPaths)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def context_config(self) -> ContextConfig:
        return ContextConfig(
            max_hop=self.retrieval.max_hop,
            cap=self.retrieval.cap,
            lam=self.scoring.lam,
            k=self.scoring.k,
            relf_mode=self.scoring.relf_mode,
            score_text=self.scoring.score_text,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


_SECTIONS = {
    "kg": KGPaths,
    "retrieval": RetrievalConfig,
    "scoring": ScoringConfig,
    "data": DataConfig,
    "model": ModelConfig,
    "train": TrainConfig,
}


def parse_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid config JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {}
    for section, cls in _SECTIONS.items():
        payload = doc.get(section, {})
        if not isinstance(payload, dict):
            raise ConfigError(f"section {section!r} must be an object")
        allowed = set(cls.__dataclass_fields__)
        bad = set(payload) - allowed
        if bad:
            raise ConfigError(f"unknown keys in section {section!r}: {sorted(bad)}")
        try:
            kwargs[section] = cls(**payload)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"section {section!r}: {exc}") from exc
    cfg = RunConfig(**kwargs)
    env_seed = os.environ.get("FUSEQA_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError("FUSEQA_SEED must be an integer") from exc
        cfg.model.seed = seed
        cfg.train.seed = seed
        cfg.data.seed = seed
    return cfg


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return parse_config("")
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())
