"""Experiment harness: config, datasets, orchestration, CLI."""

from .config import ExperimentConfig, load_config, parse_config_text
from .datasets import (
    DatasetHandle,
    load_cifar,
    make_synthetic,
    save_cifar_batch,
    subset,
)

__all__ = [
    "DatasetHandle",
    "ExperimentConfig",
    "load_cifar",
    "load_config",
    "make_synthetic",
    "parse_config_text",
    "save_cifar_batch",
    "subset",
]
