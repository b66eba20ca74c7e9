"""Run configuration: an INI file of [section] blocks with key = value
lines.  Unknown sections or keys are rejected so typos fail fast, every
value is type-checked, and the resolved configuration has a canonical text
form whose SHA-256 goes into the run manifest."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

from .errors import ConfigError
from .net.model import ModelConfig
from .net.train import TrainConfig

# section -> key -> (type tag, default); tags: int, float, str, bool, floats
SCHEMA = {
    "run": {
        "seed": ("int", 0),
        "out_dir": ("str", "runs/out"),
    },
    "data": {
        "source": ("str", "synthetic"),
        "csv_path": ("str", ""),
        "window": ("int", 128),
        "stride": ("int", 128),
        "test_fraction": ("float", 0.2),
        "windows_per_class": ("int", 125),
        "sample_rate": ("float", 2048.0),
        "duration": ("float", 8.0),
        "shaft_freq": ("float", 16.0),
        "base_noise": ("float", 0.05),
    },
    "image": {
        "size": ("int", 64),
    },
    "model": {
        "series_channels": ("int", 64),
        "image_channels": ("int", 64),
        "keep_rate": ("float", 0.9),
        "loss_mode": ("str", "binary"),
    },
    "train": {
        "epochs": ("int", 15),
        "batch_size": ("int", 32),
        "initial_lr": ("float", 1e-4),
        "lr_decay": ("float", 0.8),
        "lr_decay_every": ("int", 3),
        "augment_epsilon": ("float", 0.5),
        "augment_prob": ("float", 0.5),
        "flip_prob": ("float", 0.5),
    },
    "augment": {
        "epsilons": ("floats", (0.0, 0.05, 0.1, 0.2, 0.5)),
        "mode": ("str", "series"),
        "diffusion_steps": ("int", 1000),
        "beta_start": ("float", 1e-4),
        "beta_end": ("float", 0.02),
    },
    "prune": {
        "rates": ("floats", (0.0, 0.1, 0.2, 0.5, 0.9)),
        "finetune_epochs": ("int", 2),
        "normalized_selector": ("bool", False),
    },
    "spectral": {
        "length": ("int", 256),
        "sigma": ("float", 0.1),
        "trials": ("int", 200),
    },
}

_BOOL_WORDS = {"true": True, "yes": True, "1": True,
               "false": False, "no": False, "0": False}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        section, name = key.split(".", 1)
        return self.values[section][name]

    def get(self, section, name):
        return self.values[section][name]


def _parse_value(tag, raw, where):
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            word = raw.strip().lower()
            if word not in _BOOL_WORDS:
                raise ValueError(raw)
            return _BOOL_WORDS[word]
        if tag == "floats":
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            if not parts:
                raise ValueError("empty list")
            return tuple(float(p) for p in parts)
        return str(raw).strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {where}: {raw!r} ({exc})") from exc


def default_config() -> RunConfig:
    values = {s: {k: d for k, (_t, d) in keys.items()} for s, keys in SCHEMA.items()}
    return RunConfig(values)


def load_config(path=None) -> RunConfig:
    cfg = default_config()
    if path is None:
        validate(cfg)
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for name, raw in parser.items(section):
            if name not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{name}")
            tag = SCHEMA[section][name][0]
            cfg.values[section][name] = _parse_value(tag, raw, f"{section}.{name}")
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    v = cfg.values
    if v["image"]["size"] % 32:
        raise ConfigError("image.size must be a multiple of 32")
    if v["data"]["source"] not in ("synthetic", "csv"):
        raise ConfigError("data.source must be synthetic or csv")
    if v["data"]["source"] == "csv" and not v["data"]["csv_path"]:
        raise ConfigError("data.csv_path is required when data.source = csv")
    if not 0 < v["data"]["test_fraction"] < 1:
        raise ConfigError("data.test_fraction must lie in (0, 1)")
    if v["data"]["window"] < 2 or v["data"]["stride"] < 1:
        raise ConfigError("data.window must be >= 2 and data.stride >= 1")
    if v["model"]["loss_mode"] not in ("binary", "multiclass"):
        raise ConfigError("model.loss_mode must be binary or multiclass")
    if not 0 < v["model"]["keep_rate"] <= 1:
        raise ConfigError("model.keep_rate must lie in (0, 1]")
    if v["train"]["epochs"] < 0 or v["train"]["batch_size"] < 1:
        raise ConfigError("train.epochs must be >= 0 and batch_size >= 1")
    if any(e < 0 for e in v["augment"]["epsilons"]):
        raise ConfigError("augment.epsilons must be nonnegative")
    if v["augment"]["mode"] not in ("series", "image", "both"):
        raise ConfigError("augment.mode must be series, image, or both")
    if any(not 0 <= r < 1 for r in v["prune"]["rates"]):
        raise ConfigError("prune.rates must lie in [0, 1)")
    if v["spectral"]["length"] < 2 or v["spectral"]["trials"] < 1:
        raise ConfigError("spectral.length must be >= 2 and trials >= 1")
    if v["spectral"]["sigma"] <= 0:
        raise ConfigError("spectral.sigma must be positive")


def canonical_text(cfg: RunConfig) -> str:
    lines = []
    for section in SCHEMA:
        lines.append(f"[{section}]")
        for name in SCHEMA[section]:
            value = cfg.values[section][name]
            if isinstance(value, tuple):
                rendered = ",".join(repr(x) for x in value)
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            lines.append(f"{name} = {rendered}")
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_text(cfg).encode("utf-8")).hexdigest()


def model_config_from(cfg: RunConfig) -> ModelConfig:
    v = cfg.values
    n_classes = 1 if v["model"]["loss_mode"] == "binary" else 4
    return ModelConfig.standard(
        image_size=v["image"]["size"],
        series_len=v["data"]["window"],
        series_channels=v["model"]["series_channels"],
        image_channels=v["model"]["image_channels"],
        n_classes=n_classes,
        keep_rate=v["model"]["keep_rate"],
    )


def train_config_from(cfg: RunConfig) -> TrainConfig:
    v = cfg.values
    return TrainConfig(
        epochs=v["train"]["epochs"],
        batch_size=v["train"]["batch_size"],
        initial_lr=v["train"]["initial_lr"],
        lr_decay=v["train"]["lr_decay"],
        lr_decay_every=v["train"]["lr_decay_every"],
        seed=v["run"]["seed"],
        loss_mode=v["model"]["loss_mode"],
        augment_epsilon=v["train"]["augment_epsilon"],
        augment_prob=v["train"]["augment_prob"],
        flip_prob=v["train"]["flip_prob"],
    )
