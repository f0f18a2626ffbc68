"""Flat ``key = value`` experiment configuration.

One namespace, documented keys, '#' comments. Validation collects every
problem before raising so a bad config reports all its errors at once.
The resolved config (defaults applied) is embedded in every output
artifact together with its hash.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from ..errors import ConfigError
from ..fxp import PRECISION_PRESETS, PrecisionConfig
from ..xbar.config import XBAR_PRESETS, CrossbarConfig


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float_list(s: str):
    return tuple(float(t) for t in s.replace(",", " ").split())


def _int_list(s: str):
    return tuple(int(t) for t in s.replace(",", " ").split())


# key -> (parser, default)
SCHEMA = {
    # dataset
    "dataset": (str, "synthetic"),           # synthetic | cifar10 | cifar100
    "data_path": (str, ""),                  # CIFAR binary directory
    "classes": (int, 10),                    # synthetic only
    "train_count": (int, 5000),
    "test_count": (int, 1000),
    "margin": (float, 1.0),                  # synthetic template strength
    "noise": (float, 1.0),                   # synthetic noise level
    "jitter": (int, 2),                      # synthetic pixel jitter
    # model / training
    "model": (str, "resnet10-tiny"),
    "checkpoint": (str, ""),                 # input checkpoint for eval commands
    "epochs": (int, 20),
    "batch_size": (int, 128),
    "lr": (float, 0.05),
    "momentum": (float, 0.9),
    "weight_decay": (float, 5e-4),
    "eps_train": (float, 0.0),
    "train_attack_steps": (int, 10),
    "augment": (_bool, True),
    # attack / evaluation
    "eps_list": (_float_list, (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0)),
    "attack_steps": (int, 10),
    "alpha": (float, 0.0),                   # 0 -> 2.5 * eps / steps
    "random_start": (_bool, False),
    "eval_count": (int, 500),
    "backend": (str, "float_reference"),
    # crossbar
    "xbar_preset": (str, "64x64_100k"),      # "" -> use the individual keys
    "rows": (int, 64),
    "cols": (int, 64),
    "r_on": (float, 100e3),
    "r_ratio": (float, 10.0),
    "r_source": (float, 400.0),
    "r_sink": (float, 400.0),
    "r_wire": (float, 6.0),
    "v_max": (float, 1.0),
    "device_model": (str, "linear"),
    # precision
    "precision_preset": (str, "desk-16bit"),  # "" -> use the individual keys
    "i_w": (int, 4),
    "w_w": (int, 4),
    "i_bit": (int, 16),
    "w_bit": (int, 16),
    "i_i_bit": (int, 8),
    "w_i_bit": (int, 3),
    "o_bit": (int, 32),
    # metrics
    "noise_samples": (int, 100),
    "nf_samples": (int, 100),
    "nf_sizes": (_int_list, (32, 64)),
    "nf_targets": (_float_list, (0.14, 0.26)),
    # surrogate
    "surrogate_rows": (int, 4),
    "surrogate_cols": (int, 4),
    "surrogate_hidden": (int, 64),
    "surrogate_epochs": (int, 200),
    "surrogate_samples": (int, 5000),
    "surrogate_bipolar": (_bool, False),
    # run
    "seed": (int, 0),
    "out_dir": (str, "out"),
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key)

    def to_dict(self) -> dict:
        out = {}
        for k in sorted(self.values):
            v = self.values[k]
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    def config_hash(self) -> str:
        canon = "\n".join(f"{k} = {self.to_dict()[k]}" for k in sorted(self.values))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def crossbar_config(self) -> CrossbarConfig:
        if self.xbar_preset:
            if self.xbar_preset not in XBAR_PRESETS:
                raise ConfigError(
                    f"unknown xbar_preset {self.xbar_preset!r}; "
                    f"known: {sorted(XBAR_PRESETS)}")
            return XBAR_PRESETS[self.xbar_preset]
        return CrossbarConfig(
            rows=self.rows, cols=self.cols, r_source=self.r_source,
            r_sink=self.r_sink, r_wire=self.r_wire, r_on=self.r_on,
            r_ratio=self.r_ratio, v_max=self.v_max,
            device_model=self.device_model)

    def precision_config(self) -> PrecisionConfig:
        if self.precision_preset:
            if self.precision_preset not in PRECISION_PRESETS:
                raise ConfigError(
                    f"unknown precision_preset {self.precision_preset!r}; "
                    f"known: {sorted(PRECISION_PRESETS)}")
            return PRECISION_PRESETS[self.precision_preset]
        return PrecisionConfig(self.i_w, self.w_w, self.i_bit, self.w_bit,
                               self.i_i_bit, self.w_i_bit, self.o_bit)


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse and validate; reports every error in one ConfigError."""
    errors = []
    values = {k: d for k, (_, d) in SCHEMA.items()}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in SCHEMA:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        parser, _ = SCHEMA[key]
        try:
            values[key] = parser(raw)
        except (ValueError, TypeError) as exc:
            errors.append(f"line {lineno}: bad value for {key}: {exc}")

    cfg = ExperimentConfig(values)
    if not errors:
        errors.extend(_validate(cfg))
    if errors:
        raise ConfigError(
            "config validation failed:\n  " + "\n  ".join(errors), errors)
    return cfg


def _validate(cfg: ExperimentConfig):
    errors = []
    if cfg.dataset not in ("synthetic", "cifar10", "cifar100"):
        errors.append(f"dataset must be synthetic|cifar10|cifar100, got {cfg.dataset!r}")
    if cfg.dataset != "synthetic" and not cfg.data_path:
        errors.append(f"dataset {cfg.dataset!r} requires data_path")
    if list(cfg.eps_list) != sorted(cfg.eps_list):
        errors.append(f"eps_list must be sorted ascending, got {list(cfg.eps_list)}")
    if any(e < 0 for e in cfg.eps_list):
        errors.append("eps_list entries must be >= 0")
    for key in ("train_count", "test_count", "eval_count", "noise_samples",
                "nf_samples", "epochs", "batch_size"):
        if cfg.values[key] < 0:
            errors.append(f"{key} must be >= 0, got {cfg.values[key]}")
    if len(cfg.nf_sizes) != len(cfg.nf_targets):
        errors.append("nf_sizes and nf_targets must have equal length")
    try:
        cfg.crossbar_config()
    except ConfigError as exc:
        errors.extend(exc.errors)
    try:
        cfg.precision_config()
    except ConfigError as exc:
        errors.extend(exc.errors)
    return errors


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path) as f:
        cfg = parse_config_text(f.read())
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        parser, _ = SCHEMA[k]
        cfg.values[k] = parser(v) if isinstance(v, str) else v
    return cfg
