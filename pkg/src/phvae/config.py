"""Run configuration: one JSON document binding dataset, model, optimizer and evaluation settings."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from phvae.data import DatasetSpec
from phvae.errors import ConfigError
from phvae.model import ModelConfig


@dataclass
class OptimizerConfig:
    lr: float = 5e-4
    epochs: int = 100
    batch_size: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"optimizer.epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"optimizer.batch_size must be >= 1, got {self.batch_size}")
        if not self.lr >= 0:
            raise ConfigError(f"optimizer.lr must be >= 0, got {self.lr}")


@dataclass
class EvalConfig:
    n_bins: int = 20
    n_repeats: int = 100
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    S_grid: list[int] = field(default_factory=lambda: [1, 2, 3])
    A_grid: list[float] = field(default_factory=lambda: [1.0, 3.0, 5.0])

    def __post_init__(self):
        if self.n_bins < 1 or self.n_repeats < 1:
            raise ConfigError("eval.n_bins and eval.n_repeats must be >= 1")
        for name in ("seeds", "S_grid", "A_grid"):
            if not getattr(self, name):
                raise ConfigError(f"eval.{name} must be non-empty")


@dataclass
class RunConfig:
    dataset: DatasetSpec
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset.to_dict(),
            "model": self.model.to_dict(),
            "optimizer": asdict(self.optimizer),
            "eval": asdict(self.eval),
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RunConfig:
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {"dataset", "model", "optimizer", "eval", "output_dir"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        if "dataset" not in d:
            raise ConfigError("config needs a 'dataset' section")
        return cls(
            dataset=DatasetSpec.from_dict(d["dataset"]),
            model=ModelConfig.from_dict(d.get("model", {})),
            optimizer=_build(OptimizerConfig, d.get("optimizer", {}), "optimizer"),
            eval=_build(EvalConfig, d.get("eval", {}), "eval"),
            output_dir=d.get("output_dir"),
        )

    def replace(self, **overrides) -> RunConfig:
        """A copy with dotted-path overrides, e.g. ``replace(**{"model.S": 1})``."""
        d = self.to_dict()
        for key, value in overrides.items():
            node = d
            *path, leaf = key.split(".")
            for p in path:
                node = node[p]
            node[leaf] = value
        return RunConfig.from_dict(d)


def _build(klass, d, section):
    if not isinstance(d, dict):
        raise ConfigError(f"'{section}' must be an object")
    unknown = set(d) - set(klass.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown {section} fields: {sorted(unknown)}")
    try:
        return klass(**d)
    except TypeError as exc:
        raise ConfigError(f"malformed {section} config: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return RunConfig.from_dict(doc)


def example1_config(source: str = "uniform", S: int = 3, A: float = 1.0, seed: int = 0,
                    data_seed: int = 2024) -> RunConfig:
    """Desk-scale settings: 50 points x 20 feature sets, dims 20/256/10, batch 5, lr 5e-4, 100 epochs."""
    return RunConfig(
        dataset=DatasetSpec(source=source, n_samples=50, n_features=20, seed=data_seed),
        model=ModelConfig(input_dim=20, hidden_dim=256, latent_dim=10, S=S, A=A, seed=seed),
        optimizer=OptimizerConfig(lr=5e-4, epochs=100, batch_size=5),
    )
