"""JSON experiment configuration with strict key checking, and named profiles."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .channels import ClusterConfig
from .flow import FlowConfig, TrainConfig
from .network import BackboneConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    kind: str = "clustered"
    n_rx: int = 16
    n_tx: int = 64
    count: int = 20000
    seed: int = 1234
    n_paths: int = 3
    angle_spread_deg: float = 4.0
    on_grid: bool = False
    path: str = ""

    def __post_init__(self):
        if self.kind not in ("gaussian", "clustered"):
            raise ValueError(f"data.kind must be 'gaussian' or 'clustered', got {self.kind!r}")
        if self.n_rx < 1 or self.n_tx < 1 or self.count < 1:
            raise ValueError("data.n_rx, data.n_tx and data.count must be positive")

    def cluster(self) -> ClusterConfig:
        return ClusterConfig(self.n_paths, self.angle_spread_deg, self.n_rx, self.n_tx, self.on_grid)


@dataclass(frozen=True)
class ExperimentConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> dict:
        out = {}
        for name in _SECTIONS:
            section = asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        parts = {}
        for name, klass in _SECTIONS.items():
            section = raw.get(name, {})
            if not isinstance(section, dict):
                raise ConfigError(f"section '{name}' must be an object")
            allowed = {f.name for f in fields(klass) if f.init}
            bad = set(section) - allowed
            if bad:
                raise ConfigError(f"unknown key(s) in '{name}': {sorted(bad)}")
            try:
                parts[name] = klass(**section)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid '{name}' section: {exc}") from exc
        return cls(**parts)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(raw)

    def replace(self, **sections) -> "ExperimentConfig":
        merged = self.to_dict()
        for name, overrides in sections.items():
            merged[name].update(overrides)
        return ExperimentConfig.from_dict(merged)


_SECTIONS = {
    "backbone": BackboneConfig,
    "flow": FlowConfig,
    "train": TrainConfig,
    "data": DataConfig,
}

# Table-scale hyper-parameters for 16x64 clustered channels.
FULL = ExperimentConfig()

PROFILES = {
    "full": FULL,
    # 8x8 i.i.d. Gaussian, about 25 minutes on one core.
    "reduced": FULL.replace(
        train={"iterations": 4000, "batch_size": 128, "lr": 1e-3, "warmup_steps": 200,
               "lr_schedule": "cosine"},
        data={"kind": "gaussian", "n_rx": 8, "n_tx": 8, "count": 20000},
    ),
    # 16x64 clustered at a budget one core finishes in well under an hour.
    "desk": FULL.replace(
        train={"iterations": 2000, "batch_size": 16, "lr": 1e-3, "warmup_steps": 100,
               "lr_schedule": "cosine"},
    ),
}


def profile(name: str) -> ExperimentConfig:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
