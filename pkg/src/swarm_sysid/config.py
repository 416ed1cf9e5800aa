"""Flat ``key = value`` experiment configuration."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .dataset import Methodology
from .state import SwarmParams

MODELS = ("ols", "mlp", "rnn", "cnn", "node")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # simulation
    n_agents: int = 32
    coupling: float = 1.0
    noise_std: float = 1e-3
    dt: float = 0.05
    noise_scaling: str = "sqrt_dt"
    n_steps: int = 3000          # used by `simulate`; dataset lengths follow the phase protocol
    seed: int = 0                # training-run initial condition and noise stream
    test_seed: int = 1           # test run for ic = different
    # methodology
    phase: str = "steady"
    ic: str = "same"
    # model
    model: str = "rnn"
    window_len: int = 5
    hidden: int = 256
    rnn_layers: int = 1
    optimizer: str = "sgd"
    learning_rate: Optional[float] = None   # None: per-model default
    epochs: Optional[int] = None
    batch_size: int = 32
    standardize: bool = False
    train_runs: int = 1           # independent training runs (seeds seed, seed + 1000, ...)
    ols_in_samples: int = 10
    ols_horizon: int = 1
    ridge: float = 0.0
    node_hidden: int = 64
    node_depth: int = 3
    node_learning_rate: float = 0.01
    node_epochs: int = 300
    node_segment_length: int = 50
    node_segment_stride: int = 25
    solver_step: float = 0.05
    # evaluation
    tail_frac: float = 0.2
    out: str = "runs"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model: expected one of {MODELS}, got {self.model!r}")
        try:
            Methodology(self.phase, self.ic)
        except ValueError as exc:
            raise ConfigError(f"phase/ic: {exc}") from None

    @property
    def methodology(self) -> Methodology:
        return Methodology(self.phase, self.ic)

    def swarm_params(self) -> SwarmParams:
        try:
            return SwarmParams(self.n_agents, self.coupling, self.noise_std, self.dt, self.n_steps, self.seed,
                               self.noise_scaling)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_DEFAULTS = ExperimentConfig()


def _coerce(key: str, raw: str):
    default = getattr(_DEFAULTS, key)
    raw = raw.strip()
    if raw.lower() in ("none", "") and _FIELDS[key].type.startswith("Optional"):
        return None
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int) or _FIELDS[key].type == "Optional[int]":
            return int(raw)
        if isinstance(default, float) or _FIELDS[key].type == "Optional[float]":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {_FIELDS[key].type}") from None
    return raw


def parse_pairs(pairs, source: str = "override") -> dict:
    out = {}
    for lineno, item in enumerate(pairs, start=1):
        line = item.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source} line {lineno}: expected key = value, got {item.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r} ({source} line {lineno})")
        out[key] = _coerce(key, val)
    return out


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    values = {}
    if path:
        text = Path(path).read_text().splitlines()
        values.update(parse_pairs(text, str(path)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in values:
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
    return replace(_DEFAULTS, **values)


def dump_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        for key, val in cfg.as_dict().items():
            if key == "out":    # keep the file identical across output locations
                continue
            fh.write(f"{key} = {'none' if val is None else (f'{val:.17g}' if isinstance(val, float) else val)}\n")
