"""Strict, schema-versioned experiment configs.

Every section is a dataclass built through :func:`strict_from_dict`, which
rejects unknown keys so typos fail loudly instead of silently using a
default. Each training command writes its resolved config next to its
outputs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import DatasetConfig
from .stage1 import Stage1Config
from .training import TrainConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def strict_from_dict(cls, data: dict, where: str = ""):
    """Build a dataclass from a dict, erroring on unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where or cls.__name__}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where or cls.__name__}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or cls.__name__}: {exc}") from exc


def _check_schema(data: dict, where: str):
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{where}: unsupported schema_version {version}")


@dataclass
class PriorSection:
    """Prior architecture knobs; vocab and length come from the codec."""

    layers: int = 4
    heads: int = 4
    dim: int = 256
    dropout: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Stage1Spec:
    schema_version: int = SCHEMA_VERSION
    model_kind: str = "joint"
    model: Stage1Config = None
    train: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "Stage1Spec":
        _check_schema(data, "stage1 config")
        data = dict(data)
        model = data.pop("model", None)
        train = data.pop("train", {})
        spec = strict_from_dict(cls, data, "stage1 config")
        spec.model = None if model is None else strict_from_dict(Stage1Config, model, "model")
        spec.train = strict_from_dict(TrainConfig, train, "train")
        return spec

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "model_kind": self.model_kind,
            "model": None if self.model is None else self.model.to_dict(),
            "train": self.train.to_dict(),
        }


@dataclass
class Stage2Spec:
    schema_version: int = SCHEMA_VERSION
    prior: PriorSection = field(default_factory=PriorSection)
    train: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "Stage2Spec":
        _check_schema(data, "stage2 config")
        data = dict(data)
        prior = data.pop("prior", {})
        train = data.pop("train", {})
        spec = strict_from_dict(cls, data, "stage2 config")
        spec.prior = strict_from_dict(PriorSection, prior, "prior")
        spec.train = strict_from_dict(TrainConfig, train, "train")
        return spec

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "prior": self.prior.to_dict(),
            "train": self.train.to_dict(),
        }


@dataclass
class ExperimentConfig:
    """Composite config for a full pipeline run, section by section."""

    schema_version: int = SCHEMA_VERSION
    model_kind: str = "joint"
    data: DatasetConfig = field(default_factory=DatasetConfig)
    stage1: Stage1Spec = field(default_factory=Stage1Spec)
    stage2: Stage2Spec = field(default_factory=Stage2Spec)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        _check_schema(data, "experiment config")
        data = dict(data)
        section_data = data.pop("data", {})
        stage1 = data.pop("stage1", {})
        stage2 = data.pop("stage2", {})
        cfg = strict_from_dict(cls, data, "experiment config")
        cfg.data = strict_from_dict(DatasetConfig, section_data, "data")
        cfg.stage1 = Stage1Spec.from_dict(stage1)
        cfg.stage2 = Stage2Spec.from_dict(stage2)
        return cfg

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "model_kind": self.model_kind,
            "data": self.data.to_dict(),
            "stage1": self.stage1.to_dict(),
            "stage2": self.stage2.to_dict(),
        }


def load_config(path: Path | str, kind: str):
    """Read a JSON config file as one of the spec classes above."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    builders = {
        "stage1": Stage1Spec.from_dict,
        "stage2": Stage2Spec.from_dict,
        "experiment": ExperimentConfig.from_dict,
    }
    if kind not in builders:
        raise ValueError(f"unknown config kind {kind!r}")
    return builders[kind](data)


def write_resolved(path: Path | str, config) -> None:
    """Persist the fully resolved config next to a run's outputs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
