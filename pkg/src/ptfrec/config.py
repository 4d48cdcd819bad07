"""Experiment configuration: defaults, key=value files, flag overrides."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

from .client import DEFENSES
from .data import FORMATS
from .models import ARCHITECTURES
from .server import HINT_STRATEGIES

PROTOCOLS = ("ptf", "fcf")


class ConfigError(ValueError):
    """Unknown key, out-of-range value, or missing dataset."""


@dataclass
class ExperimentConfig:
    dataset: str = ""
    dataset_format: str = "movielens-100k"
    protocol: str = "ptf"
    client_model: str = "neumf"
    server_model: str = "neumf"
    rounds: int = 20
    participation: float = 1.0
    client_epochs: int = 5
    server_epochs: int = 2
    client_batch: int = 64
    server_batch: int = 1024
    dim: int = 32
    lr: float = 0.001
    gcn_layers: int = 3
    train_fraction: float = 0.8
    negative_ratio: int = 4
    hint_size: int = 30
    hint_mix: float = 0.5
    hint_strategy: str = "full"
    defense: str = "sampling+swapping"
    pos_fraction_min: float = 0.1
    pos_fraction_max: float = 1.0
    neg_multiplier_min: int = 1
    neg_multiplier_max: int = 4
    swap_fraction: float = 0.1
    ldp_scale: float = 0.2
    attack_fraction: float = 0.2
    eval_k: int = 20
    eval_every: int = 0   # 0 = evaluate at the final round only
    workers: int = 0      # client processes per round; 0 = one per cpu (max 4)
    seed: int = 0
    out_dir: str = ""

    def validate(self) -> "ExperimentConfig":
        c = self
        checks = [
            (c.dataset_format in FORMATS, f"dataset_format must be one of {FORMATS}"),
            (c.protocol in PROTOCOLS, f"protocol must be one of {PROTOCOLS}"),
            (c.client_model in ARCHITECTURES, f"client_model must be one of {ARCHITECTURES}"),
            (c.server_model in ARCHITECTURES, f"server_model must be one of {ARCHITECTURES}"),
            (c.rounds >= 1, "rounds must be >= 1"),
            (0.0 < c.participation <= 1.0, "participation must be in (0,1]"),
            (c.client_epochs >= 1, "client_epochs must be >= 1"),
            (c.server_epochs >= 1, "server_epochs must be >= 1"),
            (c.client_batch >= 1, "client_batch must be >= 1"),
            (c.server_batch >= 1, "server_batch must be >= 1"),
            (c.dim >= 1, "dim must be >= 1"),
            (c.lr > 0, "lr must be > 0"),
            (c.gcn_layers >= 0, "gcn_layers must be >= 0"),
            (0.0 < c.train_fraction < 1.0, "train_fraction must be in (0,1)"),
            (c.negative_ratio >= 1, "negative_ratio must be >= 1"),
            (c.hint_size >= 1, "hint_size (alpha) must be >= 1"),
            (0.0 <= c.hint_mix <= 1.0, "hint_mix (mu) must be in [0,1]"),
            (c.hint_strategy in HINT_STRATEGIES, f"hint_strategy must be one of {HINT_STRATEGIES}"),
            (c.defense in DEFENSES, f"defense must be one of {DEFENSES}"),
            (0.0 < c.pos_fraction_min <= c.pos_fraction_max <= 1.0,
             "positive fraction range (beta) must satisfy 0 < min <= max <= 1"),
            (1 <= c.neg_multiplier_min <= c.neg_multiplier_max,
             "negative multiplier range (gamma) must satisfy 1 <= min <= max"),
            (0.0 <= c.swap_fraction <= 1.0, "swap_fraction (lambda) must be in [0,1]"),
            (c.ldp_scale > 0, "ldp_scale must be > 0"),
            (0.0 < c.attack_fraction <= 1.0, "attack_fraction must be in (0,1]"),
            (c.eval_k >= 1, "eval_k must be >= 1"),
            (c.eval_every >= 0, "eval_every must be >= 0"),
            (c.workers >= 0, "workers must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, value: str):
    kind = _FIELD_TYPES[key]
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return value


def parse_config(path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Resolve a config from an optional key=value file plus overrides.

    File syntax: one `key = value` per line, '#' starts a comment; keys may
    use '-' or '_'. Unknown keys and out-of-range values are errors.
    """
    values: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                lines = f.read().splitlines()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _coerce(key, value)
            except ValueError as e:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {e}") from e
    for key, value in (overrides or {}).items():
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = value
    cfg = ExperimentConfig(**values).validate()
    if cfg.dataset and not os.path.exists(cfg.dataset):
        raise ConfigError(f"dataset not found: {cfg.dataset}")
    return cfg


def write_config_echo(cfg: ExperimentConfig, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
