"""Flat ``key = value`` run configuration.

Precedence, lowest to highest: field defaults, the ``--config`` file,
``--set key=value`` overrides, dedicated command-line flags.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .agent.dqn import AgentConfig
from .env import EnvConfig
from .errors import ConfigError
from .volume import PhantomConfig


@dataclass(frozen=True)
class RunConfig:
    # run
    seed: int = 0
    out_dir: str = "run"
    dataset_dir: str = "dataset"
    # dataset
    n_train: int = 16
    n_val: int = 4
    n_test: int = 8
    dims: tuple[int, int, int] = (64, 64, 64)
    spacing: float = 1.0
    landmark_count: int = 3
    rotation_range: float = 30.0
    noise_level: float = 0.2
    heatmap_sigma: float = 4.0
    organ_center: float = 0.22
    organ_radius: float = 11.0
    center_jitter: float = 1.0
    # environment
    max_steps: int = 60
    extent: int = 64
    pixel_pitch: float = 0.5
    step_init: float = 1.0
    step_floor: float = 0.01
    step_shrink: float = 0.1
    osc_limit: int = 3
    bounds_inflation: float = 0.2
    asr_sign_literal: bool = False
    # agent
    gamma: float = 0.85
    delta: float = 0.5
    lr: float = 5e-5
    batch: int = 32
    target_sync: int = 1800
    eps_start: float = 0.6
    eps_end: float = 0.05
    eps_decay_steps: int = 10_000
    alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    p_min: float = 1e-3
    capacity: int = 15_000
    hidden: tuple[int, int] = (128, 128)
    downsample: int = 2
    pose_scale: float = 32.0
    uniform_replay: bool = False
    warmup: int = 500
    # imitation
    demos_per_volume: int = 20
    il_epochs: int = 10
    il_lr: float = 1e-3
    il_batch: int = 32
    # training schedule
    rl_steps: int = 20_000
    val_interval: int = 2_000
    log_interval: int = 500

    def phantom_config(self, seed: int) -> PhantomConfig:
        return PhantomConfig(
            seed=seed,
            dims=self.dims,
            spacing=self.spacing,
            landmark_count=self.landmark_count,
            rotation_range=self.rotation_range,
            noise_level=self.noise_level,
            heatmap_sigma=self.heatmap_sigma,
            organ_center=self.organ_center,
            organ_radius=self.organ_radius,
            center_jitter=self.center_jitter,
        )

    def env_config(self) -> EnvConfig:
        return _subset(EnvConfig, self)

    def agent_config(self) -> AgentConfig:
        return _subset(AgentConfig, self)

    def validate(self) -> None:
        for name in ("n_train", "n_val", "n_test"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.n_train == 0:
            raise ConfigError("n_train must be >= 1")
        if self.extent % self.downsample:
            raise ConfigError("downsample must divide extent")
        for name in ("rl_steps", "demos_per_volume", "il_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.val_interval < 1 or self.log_interval < 1:
            raise ConfigError("val_interval and log_interval must be >= 1")
        self.phantom_config(0).validate()
        self.env_config().validate()
        self.agent_config().validate()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def dumps(self) -> str:
        lines = ["# spagent run configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _subset(cls, cfg: RunConfig):
    names = {f.name for f in fields(cls)}
    return cls(**{n: getattr(cfg, n) for n in names if hasattr(cfg, n)})


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            vals = tuple(int(x) for x in raw.split(","))
            expected = 3 if key == "dims" else 2
            if len(vals) != expected:
                raise ValueError(raw)
            return vals
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_pairs(pairs) -> dict:
    """Turn ``key=value`` strings into typed overrides; unknown keys are errors."""
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(key, value)
    return out


def parse_config_text(text: str) -> dict:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        pairs.append(line)
    return parse_pairs(pairs)


def load_config(path=None, overrides=None, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = cfg.replace(**parse_config_text(text))
    if overrides:
        cfg = cfg.replace(**overrides)
    cfg.validate()
    return cfg
