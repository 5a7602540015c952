"""Run configuration: defaults, JSON config files, and CLI precedence.

Resolution order everywhere is CLI flag > config file > built-in default.
The resolved configuration is echoed at the start of every run and into
training checkpoints.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .features import EncoderConfig, FilterBankConfig
from .sampler import SamplerConfig


@dataclass(frozen=True)
class NetConfig:
    """Denoiser network sizes (architecture is fixed, widths are not)."""

    hidden_dim: int = 128
    step_embed_dim: int = 64
    kernel: int = 3


@dataclass(frozen=True)
class DiffusionConfig:
    k_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    prediction_mode: str = "sample"   # "sample" or "epsilon"
    ddim_steps: int = 10


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 1
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0 or self.batch_size < 1:
            raise ValueError("learning_rate must be >= 0 and batch_size >= 1")


@dataclass(frozen=True)
class SynthConfig:
    count: int = 12
    vertices: int = 50
    frames: int = 60
    fps: float = 30.0
    sample_rate: int = 16000


@dataclass(frozen=True)
class MetricsConfig:
    vertical_axis: int = 1   # default upper-face mask: top half along y


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    bank: FilterBankConfig = field(default_factory=FilterBankConfig)
    net: NetConfig = field(default_factory=NetConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)


_SECTIONS = {
    "sampler": SamplerConfig,
    "encoder": EncoderConfig,
    "bank": FilterBankConfig,
    "net": NetConfig,
    "diffusion": DiffusionConfig,
    "train": TrainConfig,
    "synth": SynthConfig,
    "metrics": MetricsConfig,
}


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from a (possibly partial) plain dict."""
    kwargs = {}
    if "seed" in data:
        kwargs["seed"] = int(data["seed"])
    for name, cls in _SECTIONS.items():
        if name in data:
            known = {f.name for f in dataclasses.fields(cls)}
            unknown = set(data[name]) - known
            if unknown:
                raise ValueError(f"unknown keys in config section '{name}': {sorted(unknown)}")
            kwargs[name] = cls(**data[name])
    unknown = set(data) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    return RunConfig(**kwargs)


def load_config_file(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def merge_overrides(base: dict, overrides: dict) -> dict:
    """Overlay dotted-path overrides ('train.epochs') onto a config dict."""
    merged = json.loads(json.dumps(base))  # deep copy of plain data
    for path, value in overrides.items():
        if value is None:
            continue
        node = merged
        parts = path.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return merged


def resolve_config(config_path: str | Path | None,
                   overrides: dict | None = None) -> RunConfig:
    """Apply precedence: flags (overrides) > config file > defaults."""
    data = load_config_file(config_path) if config_path else {}
    data = merge_overrides(data, overrides or {})
    return config_from_dict(data)


def format_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)
