"""Experiment configuration files.

INI-style text: ``[section]`` headers, ``key = value`` lines, ``#`` or ``;``
comments. Every section and key is optional; unknown ones are errors.
All problems in a file are reported together, each with its field name::

    [geometry]
    block = 16            # sensing block side B (N = B*B)
    levels = 2            # wavelet levels used by P3
    p2_layers = 5
    p2_channels = 32
    p3_layers = 3
    p3_channels = 32

    [channel]
    model = bernoulli     # bernoulli | burst
    regime = fixed(0.1)   # fixed(r) | uniform(lo,hi), rates in [0, 0.5]
    burst_mean_len = 8    # burst model only
    seed = 0

    [train]
    subrate = 0.1
    patches = 2000
    patch_side = 32
    batch_size = 16
    epochs = 100,60,60    # P1,P2,P3
    lr = 1e-3,1e-3,1e-3
    lr_decay_fraction = 0.2
    seed = 0

    [eval]
    test_drops = 0,0.1,0.2,0.3
    trials = 10
    seed = 0

    [paths]
    train_images = path/to/pgm/dir   # default: bundled corpus
    test_images = path/to/pgm/dir

Relative paths are resolved against the config file's directory.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .channel import ChannelSpec
from .errors import ConfigurationError
from .imageio import corpus_dir
from .model import Geometry
from .train import TrainConfig


class ConfigError(ConfigurationError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid config:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass
class EvalSettings:
    test_drops: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3)
    trials: int = 10
    seed: int = 0


@dataclass
class ExperimentConfig:
    geometry: Geometry = field(default_factory=Geometry)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)
    train_images: Path = field(default_factory=lambda: corpus_dir("train"))
    test_images: Path = field(default_factory=lambda: corpus_dir("test"))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


_GEOMETRY_KEYS = {f.name: int for f in fields(Geometry)}
_CHANNEL_KEYS = {"model": str, "regime": str, "burst_mean_len": float, "seed": int}
_TRAIN_KEYS = {
    "subrate": float, "patches": int, "patch_side": int, "batch_size": int,
    "epochs": _ints, "lr": _floats, "lr_decay_fraction": float, "seed": int,
}
_EVAL_KEYS = {"test_drops": _floats, "trials": int, "seed": int}
_PATH_KEYS = {"train_images": str, "test_images": str}
SCHEMA = {
    "geometry": _GEOMETRY_KEYS,
    "channel": _CHANNEL_KEYS,
    "train": _TRAIN_KEYS,
    "eval": _EVAL_KEYS,
    "paths": _PATH_KEYS,
}


def parse_config(text: str, base_dir=None) -> ExperimentConfig:
    """Validate a config text in one pass; raise :class:`ConfigError` listing every problem."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None,
                                   default_section="__no_defaults__")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc
    problems: list[str] = []
    values: dict[str, dict] = {s: {} for s in SCHEMA}
    for section in cp.sections():
        if section not in SCHEMA:
            problems.append(f"[{section}]: unknown section")
            continue
        for key, raw in cp.items(section):
            conv = SCHEMA[section].get(key)
            if conv is None:
                problems.append(f"{section}.{key}: unknown key")
                continue
            try:
                values[section][key] = conv(raw.strip())
            except ValueError:
                problems.append(f"{section}.{key}: cannot parse {raw.strip()!r}")

    geometry = Geometry()
    try:
        geometry = Geometry(**values["geometry"])
    except ConfigurationError as exc:
        problems.append(f"geometry: {exc}")

    ch = values["channel"]
    channel = ChannelSpec()
    try:
        channel = ChannelSpec.parse_regime(ch.get("regime", "fixed(0)"), seed=ch.get("seed", 0))
        model = ch.get("model", "bernoulli")
        channel = ChannelSpec(model, channel.lo, channel.hi, ch.get("burst_mean_len", 1.0), channel.seed)
    except ConfigurationError as exc:
        problems.append(f"channel: {exc}")

    tr = dict(values["train"])
    for key in ("epochs", "lr"):
        if key in tr:
            if len(tr[key]) != 3:
                problems.append(f"train.{key}: expected three comma-separated values, got {len(tr[key])}")
                del tr[key]
    train = TrainConfig(channel=channel, **tr)
    if not 0.0 <= train.lr_decay_fraction <= 1.0:
        problems.append(f"train.lr_decay_fraction: must be in [0, 1], got {train.lr_decay_fraction}")
    if train.patches < 0:
        problems.append(f"train.patches: must be >= 0, got {train.patches}")
    if min(train.lr) <= 0:
        problems.append("train.lr: learning rates must be positive")
    try:
        train.validate(geometry)
    except ConfigurationError as exc:
        problems += [f"train: {p}" for p in str(exc).split("; ")]

    ev = EvalSettings(**values["eval"])
    if ev.trials < 1:
        problems.append(f"eval.trials: must be >= 1, got {ev.trials}")
    bad = [r for r in ev.test_drops if not 0.0 <= r <= 1.0]
    if bad or not ev.test_drops:
        problems.append(f"eval.test_drops: rates must be in [0, 1] and non-empty, got {ev.test_drops}")

    if problems:
        raise ConfigError(problems)
    cfg = ExperimentConfig(geometry, train, ev)
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    for key in _PATH_KEYS:
        if key in values["paths"]:
            p = Path(values["paths"][key])
            setattr(cfg, key, p if p.is_absolute() else base / p)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)
