"""Run configuration: one JSON document, overridable field by field.

Precedence, lowest to highest: built-in defaults, the config file, ``--set
key.path=value`` overrides, then dedicated flags such as ``--seed``.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .losses import LossWeights
from .matching import MATCHERS
from .model import ModelConfig
from .synth.render import PRESETS

MODES = ("standard", "category", "dataset")


@dataclass
class OptimConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ScheduleConfig:
    iterations: int = 2000
    decay_step: int = 1500
    decay_factor: float = 10.0
    log_every: int = 50


@dataclass
class DataConfig:
    """Either ``root`` (a generated dataset directory) or in-memory generation settings."""

    root: str | None = None
    seed: int = 0
    clips: int = 640
    categories: int = 12
    styles: list[str] = field(default_factory=lambda: ["realistic"])
    eval_fraction: float = 0.2
    clip_frames: int = 32
    image_size: int = 32
    max_objects: int = 3
    sketches_per_category: list[int] = field(default_factory=lambda: [8, 2])


@dataclass
class ProtocolConfig:
    """Which pairs train and evaluate.

    ``standard``: train split vs eval split, one style. ``category``: seen
    categories train, unseen categories evaluate. ``dataset``: sketches in
    ``train_style`` train, sketches in ``eval_style`` evaluate on the same clips.
    """

    mode: str = "standard"
    n_seen: int = 9
    split_seed: int = 0
    train_style: str = "realistic"
    eval_style: str = "abstract"
    max_train_pairs: int | None = None


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    optim: OptimConfig = field(default_factory=OptimConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    data: DataConfig = field(default_factory=DataConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    batch_size: int = 8
    seed: int = 0
    matching: str = "per-frame"
    out: str | None = None

    def validate(self, check_paths: bool = True) -> "RunConfig":
        self.model.validate()
        self.loss.validate()
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.schedule.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if self.schedule.log_every < 1:
            raise ConfigError("log_every must be positive")
        if self.optim.lr <= 0 or not 0 <= self.optim.beta1 < 1 or not 0 <= self.optim.beta2 < 1:
            raise ConfigError("optimizer settings out of range")
        if self.matching not in MATCHERS:
            raise ConfigError(f"matching must be one of {sorted(MATCHERS)}")
        if self.model.frames > self.data.clip_frames:
            raise ConfigError(f"model samples {self.model.frames} frames from {self.data.clip_frames}-frame clips")
        if self.model.image_size != self.data.image_size:
            raise ConfigError("model.image_size and data.image_size differ")
        if self.data.max_objects > self.model.slots:
            raise ConfigError(f"up to {self.data.max_objects} objects per frame but only {self.model.slots} slots")
        p = self.protocol
        if p.mode not in MODES:
            raise ConfigError(f"protocol.mode must be one of {MODES}")
        for st in (p.train_style, p.eval_style, *self.data.styles):
            if st not in PRESETS:
                raise ConfigError(f"unknown sketch style preset {st!r}")
        if p.mode == "dataset":
            if p.train_style == p.eval_style:
                raise ConfigError("dataset transfer needs two different styles")
            missing = {p.train_style, p.eval_style} - set(self.data.styles)
            if missing and self.data.root is None:
                raise ConfigError(f"data.styles lacks {sorted(missing)}")
        if p.mode == "category" and not 0 < p.n_seen < self.data.categories:
            raise ConfigError("protocol.n_seen must leave at least one unseen category")
        if check_paths and self.data.root is not None and not (Path(self.data.root) / "manifest.json").exists():
            raise ConfigError(f"data.root {self.data.root} has no manifest.json")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = copy.deepcopy(d)
        parts = {"model": ModelConfig, "loss": LossWeights, "optim": OptimConfig,
                 "schedule": ScheduleConfig, "data": DataConfig, "protocol": ProtocolConfig}
        kw: dict[str, Any] = {}
        known = {f.name for f in fields(cls)}
        for key, value in d.items():
            if key not in known:
                raise ConfigError(f"unknown config field {key!r}")
            if key in parts:
                sub = parts[key]
                names = {f.name for f in fields(sub)}
                bad = set(value) - names
                if bad:
                    raise ConfigError(f"unknown {key} fields: {sorted(bad)}")
                kw[key] = sub(**value)
            else:
                kw[key] = value
        return cls(**kw)


def set_path(d: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = d
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted}: {k} is not a section")
    node[keys[-1]] = value


def parse_override(item: str) -> tuple[str, Any]:
    """``a.b=3`` -> ``("a.b", 3)``; values parse as JSON, falling back to plain strings."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key.path=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path: str | Path | None = None, overrides: list[str] | None = None,
                check_paths: bool = True, **flags: Any) -> RunConfig:
    d: dict = {}
    if path is not None:
        try:
            d = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path}: {e}") from None
    for item in overrides or []:
        set_path(d, *parse_override(item))
    for dotted, value in flags.items():
        if value is not None:
            set_path(d, dotted, value)
    try:
        cfg = RunConfig.from_dict(d)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    return cfg.validate(check_paths)
