"""Run configuration for the command line pipeline, loaded from JSON."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .anomaly import ClassifierConfig, ThresholdPolicy
from .autoencoder import InvalidConfig, ModelConfig
from .features import DEFAULT_LENGTH, FilterRuleSet, SplitSpec


@dataclass
class TrainSettings:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3


@dataclass
class RunConfig:
    """Paths plus per-module overrides.  Path fields may be relative to the
    config file's directory."""

    tracks: Optional[str] = None
    airport: Optional[str] = None
    checkpoint: Optional[str] = None
    features: Optional[str] = None
    out: str = "out"
    seed: int = 0
    filter: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    threshold: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)
    classifier: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise InvalidConfig(f"{path}: cannot read config ({exc})") from None
        if not isinstance(raw, dict):
            raise InvalidConfig(f"{path}: top level must be an object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise InvalidConfig(f"{path}: unknown config keys {unknown}")
        cfg = cls(**raw)
        for key in ("tracks", "airport", "checkpoint", "features", "out"):
            value = getattr(cfg, key)
            if value is not None and not Path(value).is_absolute():
                setattr(cfg, key, str(path.parent / value))
        return cfg

    def _build(self, kind, overrides: dict, **extra):
        names = {f.name for f in fields(kind)}
        unknown = sorted(set(overrides) - names)
        if unknown:
            raise InvalidConfig(f"unknown {kind.__name__} fields {unknown}")
        try:
            return kind(**{**extra, **overrides})
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad {kind.__name__}: {exc}") from None

    def filter_rules(self) -> FilterRuleSet:
        return self._build(FilterRuleSet, self.filter)

    def model_config(self) -> ModelConfig:
        cfg = self._build(ModelConfig, self.model, seed=self.seed)
        cfg.validate()
        return cfg

    def input_length(self) -> int:
        return int(self.model.get("input_length", DEFAULT_LENGTH))

    def threshold_policy(self) -> ThresholdPolicy:
        return self._build(ThresholdPolicy, self.threshold)

    def split_spec(self) -> SplitSpec:
        return self._build(SplitSpec, self.split, seed=self.seed)

    def classifier_config(self) -> ClassifierConfig:
        return self._build(ClassifierConfig, self.classifier)

    def train_settings(self) -> TrainSettings:
        return self._build(TrainSettings, self.train)
