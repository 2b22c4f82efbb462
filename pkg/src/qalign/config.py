"""Run configuration: flat key-value file, command-line flags, defaults.

Precedence is flag > config file > built-in default. The config file is a
flat YAML mapping whose keys are the :class:`RunConfig` field names.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import yaml

from .alignment.losses import LossConfig
from .alignment.training import OptimizerConfig
from .sampling import LadderConfig


@dataclass(frozen=True)
class RunConfig:
    # losses
    m_cons: float = 2.5e-3
    m_rank: float = 6.75e-2
    lambda_cons: float = 1.0
    lambda_pos: float = 1.0
    lambda_neg: float = 1.0
    tau: float = 2.0
    variant: str = "similarity"
    # ladders
    patch_size: int = 224
    levels: int = 5
    n_distortions: int = 1
    min_overlap: float = 0.25
    # optimiser and model
    lr: float = 1e-3
    weight_decay: float = 1e-2
    epochs: int = 10
    batch_size: int = 16
    patience: int | None = None
    dim: int = 32
    seed: int = 0
    jobs: int = 0  # 0: logical CPU count
    # paths
    corpus: str | None = None
    prompts: str | None = None
    model: str | None = None
    out: str | None = None

    def loss(self) -> LossConfig:
        return LossConfig(self.m_cons, self.m_rank, self.lambda_cons, self.lambda_pos, self.lambda_neg, self.tau, self.variant)

    def ladder(self) -> LadderConfig:
        return LadderConfig(self.patch_size, self.levels, self.n_distortions, self.min_overlap, self.seed)

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(
            lr=self.lr, weight_decay=self.weight_decay, epochs=self.epochs,
            batch_size=self.batch_size, seed=self.seed, patience=self.patience,
        )

    def workers(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)

    def validate(self) -> "RunConfig":
        self.loss(), self.ladder(), self.optimizer()
        if self.epochs < 0 or self.batch_size < 1 or self.dim < 1 or self.lr <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1, dim >= 1 and lr > 0 required")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, value):
    if value is None:
        return None
    kind = FIELD_TYPES[name]
    if kind == "float":
        return float(value)
    if kind in ("int", "int | None"):
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ValueError(f"{name} must be an integer, got {value!r}")
        return int(value)
    return str(value)


def load_config_file(path) -> dict:
    """Read a flat mapping; unknown keys and nested values are errors."""
    path = Path(path)
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config file must be a flat key: value mapping")
    out = {}
    for key, value in data.items():
        key = str(key).replace("-", "_")
        if key not in FIELD_TYPES:
            raise ValueError(f"{path}: unknown key {key!r}")
        if isinstance(value, (dict, list)):
            raise ValueError(f"{path}: key {key!r} must hold a scalar")
        out[key] = _coerce(key, value)
    return out


def resolve(flags: dict | None = None, config_path=None) -> RunConfig:
    """Merge defaults, then the config file, then flags that were given (not None)."""
    values = {}
    if config_path is not None:
        values.update(load_config_file(config_path))
    for key, value in (flags or {}).items():
        if key in FIELD_TYPES and value is not None:
            values[key] = _coerce(key, value)
    return RunConfig(**values).validate()


def write_config_file(path, cfg: RunConfig) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False), encoding="utf-8")
