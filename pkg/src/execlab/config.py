"""Experiment configuration: a single versioned JSON file, strictly validated.

Unknown fields are rejected by name so typos cannot silently change a run.
Seeds are explicit everywhere; nothing defaults to the wall clock.  Only
paths may be overridden from the environment (EXECLAB_CAPTURE,
EXECLAB_OUT_DIR).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .env import ProblemSpec
from .errors import ConfigError
from .ppo.agent import PpoConfig
from .signals import DEFAULT_HORIZONS_MS, DEFAULT_WINDOW_MS
from .synth import SynthConfig

CONFIG_VERSION = 1

SCOPES = ("single", "cross")


@dataclass
class PathsSpec:
    capture: str | None = None
    out_dir: str = "out"
    checkpoint_single: str | None = None
    checkpoint_cross: str | None = None


@dataclass
class SignalsSpec:
    target_venue: str = "v1"
    horizons_ms: tuple[int, ...] = DEFAULT_HORIZONS_MS
    window_ms: int = DEFAULT_WINDOW_MS
    bin_horizon_ms: int = 5000
    features: tuple[str, ...] = ("flow_imbalance_norm", "depth_imbalance", "peer_spread_centered")


@dataclass
class TrainSpec:
    scope: str = "cross"
    updates: int = 60
    seed: int = 7

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ConfigError(f"train.scope must be one of {SCOPES}", field="train.scope")


@dataclass
class EvaluateSpec:
    episodes: int = 1000
    seed: int = 11
    heatmap_signal: str = "cross_depth_imbalance"
    heatmap_episodes: int = 200
    trace_episodes: int = 1


@dataclass
class ExperimentConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    paths: PathsSpec = field(default_factory=PathsSpec)
    synth: SynthConfig = field(default_factory=SynthConfig)
    synth_duration_s: float = 120.0
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    signals: SignalsSpec = field(default_factory=SignalsSpec)
    train: TrainSpec = field(default_factory=TrainSpec)
    evaluate: EvaluateSpec = field(default_factory=EvaluateSpec)


_SECTION_TYPES = {
    "paths": PathsSpec,
    "synth": SynthConfig,
    "problem": ProblemSpec,
    "ppo": PpoConfig,
    "signals": SignalsSpec,
    "train": TrainSpec,
    "evaluate": EvaluateSpec,
}

_SCALAR_KEYS = ("version", "seed", "synth_duration_s")

_TUPLE_FIELDS = {"lag_ms", "basis", "depth_profile", "horizons_ms", "features"}


def _build_section(name: str, cls, raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object", field=name)
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        bad = sorted(unknown)[0]
        raise ConfigError(f"unknown config field {name}.{bad}", field=f"{name}.{bad}")
    kwargs = {}
    for key, value in raw.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {name!r}: {exc}", field=name) from exc


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    allowed = set(_SECTION_TYPES) | set(_SCALAR_KEYS)
    unknown = set(raw) - allowed
    if unknown:
        bad = sorted(unknown)[0]
        raise ConfigError(f"unknown config field {bad}", field=bad)
    version = raw.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}", field="version")
    cfg = ExperimentConfig(
        version=version,
        seed=raw.get("seed", 0),
        synth_duration_s=raw.get("synth_duration_s", 120.0),
    )
    for name, cls in _SECTION_TYPES.items():
        if name in raw:
            setattr(cfg, name, _build_section(name, cls, raw[name]))
    _apply_env_overrides(cfg)
    return cfg


def _apply_env_overrides(cfg: ExperimentConfig) -> None:
    capture = os.environ.get("EXECLAB_CAPTURE")
    if capture:
        cfg.paths.capture = capture
    out_dir = os.environ.get("EXECLAB_OUT_DIR")
    if out_dir:
        cfg.paths.out_dir = out_dir


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw)


def config_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
