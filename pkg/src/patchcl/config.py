"""Flat key-value run configuration with dotted keys.

Config files are plain text, one ``key = value`` per line, ``#`` comments
allowed. Every key has a default matching the reference training recipe
(batch 8, lr 1e-3 decayed x0.1 every 80 of 240 epochs, 16x16 grid,
temperature 0.05, alpha 0.02, beta 0.1). Environment variables override
file values using the ``PATCHCL_`` prefix with ``__`` standing in for the
dot, e.g. ``PATCHCL_TRAIN__LR_INITIAL=0.01``.
"""

from __future__ import annotations

import os
from pathlib import Path

from .data import AugmentationConfig
from .losses import ContrastiveConfig
from .trainer import TrainConfig
from .unet import BackboneSpec

ENV_PREFIX = "PATCHCL_"

DEFAULTS: dict[str, object] = {
    "train.batch_size": 8,
    "train.epochs": 240,
    "train.lr_initial": 1e-3,
    "train.lr_decay_factor": 0.1,
    "train.lr_decay_every": 80,
    "train.grid_n": 16,
    "train.seed": 0,
    "train.output_size": 256,
    "train.crop": "random",
    "loss.temperature": 0.05,
    "loss.alpha": 0.02,
    "loss.beta": 0.1,
    "bank.capacity": 1024,
    "bank.sample_cap": 64,
    "model.in_channels": 3,
    "model.base_width": 16,
    "model.depth": 4,
    "aug.enabled": True,
    "aug.flip_prob": 0.5,
    "aug.rotation_min": -180.0,
    "aug.rotation_max": 180.0,
    "aug.brightness_min": 0.5,
    "aug.brightness_max": 1.5,
    "aug.contrast_min": 0.5,
    "aug.contrast_max": 1.5,
    "eval.threshold": 0.5,
    "eval.aggregation": "per-image-mean",
}


class ConfigError(ValueError):
    """All problems found while loading a configuration, at once."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))


def _coerce(key: str, raw: str) -> object:
    default = DEFAULTS[key]
    if isinstance(default, bool):
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"expected a boolean for {key}, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def parse_config_text(text: str) -> tuple[dict[str, str], list[str]]:
    """Parse ``key = value`` lines; returns (entries, syntax problems)."""
    entries: dict[str, str] = {}
    problems: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, _, value = stripped.partition("=")
        entries[key.strip()] = value.strip()
    return entries, problems


def load_config(
    path: str | Path | None = None,
    overrides: dict[str, object] | None = None,
    env: dict[str, str] | None = None,
) -> dict[str, object]:
    """Defaults, then file values, then env overrides, then explicit ones.

    Every problem (unknown key, bad value) is collected and reported in a
    single ConfigError rather than failing on the first.
    """
    values = dict(DEFAULTS)
    problems: list[str] = []

    if path is not None:
        text = Path(path).read_text()
        entries, syntax_problems = parse_config_text(text)
        problems.extend(syntax_problems)
        for key, raw in entries.items():
            if key not in DEFAULTS:
                problems.append(f"unknown config key: {key}")
                continue
            try:
                values[key] = _coerce(key, raw)
            except ValueError as exc:
                problems.append(f"bad value for {key}: {exc}")

    env = os.environ if env is None else env
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX) :].lower().replace("__", ".")
        if key not in DEFAULTS:
            problems.append(f"unknown config key from environment: {name}")
            continue
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            problems.append(f"bad value for {name}: {exc}")

    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            problems.append(f"unknown config key override: {key}")
            continue
        values[key] = value

    if problems:
        raise ConfigError(problems)
    return values


def build_train_config(values: dict[str, object]) -> TrainConfig:
    """Assemble the typed training configuration from flat values."""
    augmentation = None
    if values["aug.enabled"]:
        augmentation = AugmentationConfig(
            horizontal_flip_prob=values["aug.flip_prob"],
            rotation_range_degrees=(values["aug.rotation_min"], values["aug.rotation_max"]),
            brightness_scale_range=(values["aug.brightness_min"], values["aug.brightness_max"]),
            contrast_scale_range=(values["aug.contrast_min"], values["aug.contrast_max"]),
            output_size=values["train.output_size"],
            crop=values["train.crop"],
        )
    return TrainConfig(
        batch_size=values["train.batch_size"],
        lr_initial=values["train.lr_initial"],
        lr_decay_factor=values["train.lr_decay_factor"],
        lr_decay_every=values["train.lr_decay_every"],
        epochs=values["train.epochs"],
        grid_n=values["train.grid_n"],
        contrastive=ContrastiveConfig(
            temperature=values["loss.temperature"],
            alpha=values["loss.alpha"],
            beta=values["loss.beta"],
            bank_sample_cap=values["bank.sample_cap"],
        ),
        seed=values["train.seed"],
        backbone=BackboneSpec(
            in_channels=values["model.in_channels"],
            base_width=values["model.base_width"],
            depth=values["model.depth"],
        ),
        bank_capacity=values["bank.capacity"],
        augmentation=augmentation,
    )
