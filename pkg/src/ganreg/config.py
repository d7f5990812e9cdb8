"""Run configuration files: line-oriented ``key = value`` with ``#`` comments.

Unknown keys are hard errors, as are missing required keys and input paths
that do not exist.  The same schema round-trips through ``format_config`` for
the run manifest.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Any


class ConfigError(ValueError):
    """Bad configuration file; the message names the offending key or line."""


@dataclass
class RunConfig:
    # input/output paths
    embeddings_path: str
    labeled_path: str
    validation_path: str
    out_dir: str
    unlabeled_path: str | None = None
    # model
    doc_len: int = 32
    gen_hidden: int = 32
    noise_dim: int = 16
    channels: int = 16
    kernel_size: int = 3
    n_blocks: int = 4
    temperature: float = 1.0
    conditional: bool = True
    # training
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lambda_reg: float = 1.0
    batch_labeled: int = 32
    batch_unlabeled: int = 32
    batch_generated: int = 32
    epochs: int = 10
    seed: int = 0
    d_steps: int = 1
    precision: str = "float64"
    generation_path: str = "soft"
    train_embeddings: bool = False
    regress_generated: bool = False


_REQUIRED = ("embeddings_path", "labeled_path", "validation_path", "out_dir")
_INPUT_PATHS = ("embeddings_path", "labeled_path", "validation_path", "unlabeled_path")

_TYPES: dict[str, type] = {
    "embeddings_path": str, "labeled_path": str, "validation_path": str,
    "out_dir": str, "unlabeled_path": str,
    "doc_len": int, "gen_hidden": int, "noise_dim": int, "channels": int,
    "kernel_size": int, "n_blocks": int, "temperature": float,
    "conditional": bool,
    "lr": float, "beta1": float, "beta2": float, "lambda_reg": float,
    "batch_labeled": int, "batch_unlabeled": int, "batch_generated": int,
    "epochs": int, "seed": int, "d_steps": int, "precision": str,
    "generation_path": str, "train_embeddings": bool, "regress_generated": bool,
}


def _parse_value(key: str, text: str, target_type) -> Any:
    try:
        if target_type is bool:
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError("expected true/false")
        if target_type is int:
            return int(text)
        if target_type is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from None


def parse_config(path) -> RunConfig:
    values: dict[str, Any] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, _, text = line.partition("=")
            key, text = key.strip(), text.strip()
            if key not in _TYPES:
                raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
            values[key] = _parse_value(key, text, _TYPES[key])
    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"{path}: missing required key {key!r}")
    cfg = RunConfig(**values)
    for key in _INPUT_PATHS:
        p = getattr(cfg, key)
        if p is not None and not os.path.exists(p):
            raise ConfigError(f"config key {key!r}: path does not exist: {p}")
    return cfg


def format_config(cfg: RunConfig) -> str:
    """Manifest form: one ``key = value`` line per field, declaration order."""
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
