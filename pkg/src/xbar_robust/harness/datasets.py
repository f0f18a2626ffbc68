"""Dataset ingestion: CIFAR binary files and the synthetic desk-scale set.

CIFAR records are 1 label byte (CIFAR-10) or 2 label bytes (CIFAR-100,
coarse then fine; the fine label is used) followed by 3072 pixel bytes,
channel-planar R, G, B. Images are kept as uint8 (n, 3, 32, 32) on the
[0, 255] scale throughout.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import ConfigError, IngestionError

_IMAGE_BYTES = 3072
_CIFAR10_FILES = {
    "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
    "test": ["test_batch.bin"],
}
_CIFAR100_FILES = {"train": ["train.bin"], "test": ["test.bin"]}


@dataclass
class DatasetHandle:
    images: np.ndarray  # uint8 (n, 3, 32, 32)
    labels: np.ndarray  # int64 (n,)
    num_classes: int
    split: str
    name: str

    def __len__(self):
        return self.images.shape[0]

    def stats(self):
        """Per-channel (mean, std) on the [0, 255] scale."""
        x = self.images.astype(np.float64)
        mean = x.mean(axis=(0, 2, 3))
        std = x.std(axis=(0, 2, 3))
        return mean, np.maximum(std, 1e-6)


def _parse_records(blob: bytes, label_bytes: int, path) -> tuple[np.ndarray, np.ndarray]:
    rec = label_bytes + _IMAGE_BYTES
    if len(blob) == 0:
        raise IngestionError(f"{path}: empty file", offset=0)
    if len(blob) % rec != 0:
        raise IngestionError(
            f"{path}: {len(blob)} bytes is not a multiple of the "
            f"{rec}-byte record size; file truncated near byte "
            f"{(len(blob) // rec) * rec}", offset=(len(blob) // rec) * rec)
    raw = np.frombuffer(blob, dtype=np.uint8).reshape(-1, rec)
    labels = raw[:, label_bytes - 1].astype(np.int64)  # fine label for CIFAR-100
    images = raw[:, label_bytes:].reshape(-1, 3, 32, 32).copy()
    return images, labels


def load_cifar(path, which: str = "train", fmt: str = "cifar10") -> DatasetHandle:
    """Load CIFAR binary batches from a directory or a single ``.bin`` file."""
    if which not in ("train", "test"):
        raise ConfigError(f"split must be 'train' or 'test', got {which!r}")
    if fmt == "cifar10":
        label_bytes, num_classes, names = 1, 10, _CIFAR10_FILES[which]
    elif fmt == "cifar100":
        label_bytes, num_classes, names = 2, 100, _CIFAR100_FILES[which]
    else:
        raise ConfigError(f"format must be 'cifar10' or 'cifar100', got {fmt!r}")

    if os.path.isdir(path):
        files = [os.path.join(path, n) for n in names]
        missing = [f for f in files if not os.path.exists(f)]
        if missing:
            raise IngestionError(f"missing CIFAR files: {missing}")
    else:
        if not os.path.exists(path):
            raise IngestionError(f"no such file: {path}")
        files = [path]

    images, labels = [], []
    for f in files:
        with open(f, "rb") as fh:
            blob = fh.read()
        im, lb = _parse_records(blob, label_bytes, f)
        bad = np.where(lb >= num_classes)[0]
        if bad.size:
            raise IngestionError(
                f"{f}: label {int(lb[bad[0]])} out of range at record {int(bad[0])}",
                offset=int(bad[0]) * (label_bytes + _IMAGE_BYTES))
        images.append(im)
        labels.append(lb)
    return DatasetHandle(np.concatenate(images), np.concatenate(labels),
                         num_classes, which, fmt)


def save_cifar_batch(images: np.ndarray, labels: np.ndarray, path,
                     fmt: str = "cifar10"):
    """Write records in the standard binary layout (inverse of load_cifar)."""
    label_bytes = 1 if fmt == "cifar10" else 2
    n = images.shape[0]
    rec = np.empty((n, label_bytes + _IMAGE_BYTES), dtype=np.uint8)
    if label_bytes == 2:
        rec[:, 0] = 0  # coarse label, unused
    rec[:, label_bytes - 1] = labels.astype(np.uint8)
    rec[:, label_bytes:] = images.reshape(n, -1)
    rec.tofile(path)


def make_synthetic(classes: int, count: int, seed: int, *,
                   margin: float = 1.0, noise: float = 1.0,
                   jitter: int = 2, split: str = "train",
                   template_seed: int | None = None) -> DatasetHandle:
    """Gaussian-blob classes rendered to CIFAR-shaped [0, 255] images.

    Each class gets a smooth random template (low-frequency field,
    amplitude ~ 32 * margin grey levels); samples add an integer pixel
    jitter of up to ``jitter`` and i.i.d. noise of sigma 32 * noise.
    High margin with low noise is linearly separable; the desk-scale
    defaults overlap enough that training and attacks behave like a
    small natural-image task. ``template_seed`` pins the class templates
    independently of the sample stream so train/test splits share one
    task.
    """
    if count < 0:
        raise ConfigError(f"count must be >= 0, got {count}")
    if classes < 1:
        raise ConfigError(f"classes must be >= 1, got {classes}")
    rng = np.random.default_rng(seed)
    t_rng = rng if template_seed is None else np.random.default_rng(template_seed)
    templates = []
    for _ in range(classes):
        low = t_rng.normal(size=(3, 8, 8))
        t = np.stack([ndimage.zoom(c, 4.0, order=1) for c in low])
        t = (t - t.mean()) / (t.std() + 1e-9)
        templates.append(t)
    images = np.empty((count, 3, 32, 32), dtype=np.uint8)
    labels = rng.integers(0, classes, size=count).astype(np.int64)
    for i in range(count):
        t = templates[labels[i]] * (32.0 * margin)
        if jitter:
            dy, dx = rng.integers(-jitter, jitter + 1, size=2)
            t = np.roll(t, (dy, dx), axis=(1, 2))
        img = 128.0 + t + rng.normal(scale=32.0 * noise, size=(3, 32, 32))
        images[i] = np.clip(img, 0, 255).astype(np.uint8)
    return DatasetHandle(images, labels, classes, split, "synthetic")


def subset(handle: DatasetHandle, count: int, seed: int) -> DatasetHandle:
    """Deterministic stratified subset of ``count`` examples."""
    if count >= len(handle):
        return handle
    rng = np.random.default_rng(seed)
    per_class = count // handle.num_classes
    picked = []
    for c in range(handle.num_classes):
        idx = np.where(handle.labels == c)[0]
        take = min(per_class, idx.size)
        picked.append(rng.choice(idx, size=take, replace=False))
    picked = np.concatenate(picked)
    if picked.size < count:  # top up from the remainder, still seeded
        rest = np.setdiff1d(np.arange(len(handle)), picked)
        picked = np.concatenate([
            picked, rng.choice(rest, size=count - picked.size, replace=False)])
    picked = np.sort(picked)
    return DatasetHandle(handle.images[picked], handle.labels[picked],
                         handle.num_classes, handle.split, handle.name)
