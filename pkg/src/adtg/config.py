"""Run configuration: every training and inference hyperparameter in one place.

Defaults follow the published recipe this toolkit implements: 128-dim
condition vectors, 96-dim action embeddings, RNN hidden size 128, margin
0.5, Adam learning rates 1e-5 (embeddings) and 5e-5 (guidance), 50/50/100
epochs, beam width 5.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional


@dataclass
class RunConfig:
    corpus_dir: str = "corpus"
    out_dir: str = "runs"
    seeds: List[int] = field(default_factory=lambda: [0])
    split_seed: int = 0

    feature_dim: int = 0  # 0 = take from the corpus manifest
    cond_dim: int = 128
    embed_dim: int = 96
    hidden_dim: int = 128
    mlp_hidden: int = 128

    margin: float = 0.5
    lr_embed: float = 1e-5
    lr_guidance: float = 5e-5
    epochs_embed: int = 50
    epochs_tracker: int = 50
    epochs_recommender: int = 100
    chunk_seconds: int = 8

    beam_width: int = 5
    max_plan_len: int = 20
    plan_t_offset: int = 0  # localization frame for complete plans: second 1 + offset

    ablation: str = "full"  # full | no_history | random_embed | onehot_embed
    history_mode: str = "events"  # events | seconds (evaluation-time history advance)
    cross_task_negatives: bool = False
    joint_rnn_update: bool = True

    def validate(self) -> None:
        positive = [
            "cond_dim", "embed_dim", "hidden_dim", "mlp_hidden", "margin", "lr_embed",
            "lr_guidance", "beam_width", "max_plan_len", "chunk_seconds",
        ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"config field {name} must be positive")
        for name in ("epochs_embed", "epochs_tracker", "epochs_recommender", "plan_t_offset"):
            if getattr(self, name) < 0:
                raise ValueError(f"config field {name} must be nonnegative")
        if self.ablation not in ("full", "no_history", "random_embed", "onehot_embed"):
            raise ValueError(f"unknown ablation variant {self.ablation!r}")
        if self.history_mode not in ("events", "seconds"):
            raise ValueError(f"unknown history mode {self.history_mode!r}")
        if not self.seeds:
            raise ValueError("need at least one seed")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        doc = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    def config_hash(self) -> str:
        # Paths and seed lists identify a run, not a model; hash the rest.
        doc = asdict(self)
        for name in ("corpus_dir", "out_dir", "seeds"):
            doc.pop(name)
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    def with_overrides(self, overrides: dict) -> "RunConfig":
        doc = asdict(self)
        known = {f.name for f in fields(type(self))}
        for key, value in overrides.items():
            if key not in known:
                raise ValueError(f"unknown config field {key!r}")
            doc[key] = value
        return type(self)(**doc)
