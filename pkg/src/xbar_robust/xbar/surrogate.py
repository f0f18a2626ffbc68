"""Learned crossbar surrogate: a two-layer perceptron on concatenated (V, G).

The network maps the N source voltages plus the N*M conductances (row
major) to the M nonideal column currents. Training data comes from the
circuit-level solver. Inputs and outputs are affinely normalized to the
configured ranges before fitting; the normalization travels with the
model.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import torch

from ..errors import ConfigError, TrainingError
from .config import CrossbarConfig
from .nf import nodal_mvm_fn

RECORD_DTYPE = "<f8"


@dataclass
class SurrogateDataset:
    """(V, G, I) records for one crossbar configuration."""

    v: np.ndarray  # (n, rows)
    g: np.ndarray  # (n, rows, cols)
    i: np.ndarray  # (n, cols)

    def __len__(self):
        return self.v.shape[0]

    def save(self, path):
        """Flat little-endian float64 records: V, then G row-major, then I."""
        n = len(self)
        rows, cols = self.g.shape[1], self.g.shape[2]
        rec = np.empty((n, rows + rows * cols + cols), dtype=RECORD_DTYPE)
        rec[:, :rows] = self.v
        rec[:, rows:rows + rows * cols] = self.g.reshape(n, -1)
        rec[:, rows + rows * cols:] = self.i
        rec.tofile(path)

    @classmethod
    def load(cls, path, rows: int, cols: int) -> "SurrogateDataset":
        width = rows + rows * cols + cols
        flat = np.fromfile(path, dtype=RECORD_DTYPE)
        if flat.size % width != 0:
            raise ConfigError(
                f"file holds {flat.size} floats, not a multiple of the "
                f"record width {width} for a {rows}x{cols} crossbar")
        rec = flat.reshape(-1, width)
        return cls(
            v=rec[:, :rows].copy(),
            g=rec[:, rows:rows + rows * cols].reshape(-1, rows, cols).copy(),
            i=rec[:, rows + rows * cols:].copy(),
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for a in (self.v, self.g, self.i):
            h.update(np.ascontiguousarray(a, dtype=RECORD_DTYPE).tobytes())
        return h.hexdigest()


def generate_surrogate_dataset(config: CrossbarConfig, count: int,
                               rng: np.random.Generator,
                               mvm=None) -> SurrogateDataset:
    """Random (V, G) draws pushed through the circuit solver (or ``mvm``)."""
    if count < 0:
        raise ConfigError(f"record count must be >= 0, got {count}")
    if mvm is None:
        mvm = nodal_mvm_fn(config)
    n, m = config.rows, config.cols
    vs = np.empty((count, n))
    gs = np.empty((count, n, m))
    cur = np.empty((count, m))
    for r in range(count):
        vs[r] = rng.uniform(0.0, config.v_max, size=n)
        gs[r] = rng.uniform(config.g_min, config.g_max, size=(n, m))
        cur[r] = mvm(vs[r], gs[r])
    return SurrogateDataset(vs, gs, cur)


class SurrogateModel:
    """Fitted two-layer perceptron plus its normalization and fit metadata."""

    def __init__(self, net: torch.nn.Module, config: CrossbarConfig,
                 i_scale: float, metadata: dict):
        self.net = net
        self.config = config
        self.i_scale = i_scale
        self.metadata = metadata

    def _features(self, v: np.ndarray, g: np.ndarray) -> torch.Tensor:
        c = self.config
        vn = v / c.v_max
        gn = (g.reshape(g.shape[0], -1) - c.g_min) / (c.g_max - c.g_min)
        return torch.from_numpy(
            np.concatenate([vn, gn], axis=1).astype(np.float32))

    def predict(self, v: np.ndarray, g: np.ndarray) -> np.ndarray:
        v = np.atleast_2d(np.asarray(v, dtype=np.float64))
        g = np.asarray(g, dtype=np.float64)
        if g.ndim == 2:
            g = np.broadcast_to(g, (v.shape[0],) + g.shape)
        with torch.no_grad():
            out = self.net(self._features(v, g)).numpy().astype(np.float64)
        return out * self.i_scale

    def save(self, path):
        torch.save({
            "state": self.net.state_dict(),
            "config": self.config.__dict__,
            "i_scale": self.i_scale,
            "metadata": self.metadata,
        }, path)

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        blob = torch.load(path, weights_only=False)
        config = CrossbarConfig(**blob["config"])
        hidden = blob["state"]["0.weight"].shape[0]
        net = _build_net(config, hidden)
        net.load_state_dict(blob["state"])
        net.eval()
        return cls(net, config, blob["i_scale"], blob["metadata"])


def _build_net(config: CrossbarConfig, hidden_units: int) -> torch.nn.Module:
    n_in = config.rows + config.rows * config.cols
    return torch.nn.Sequential(
        torch.nn.Linear(n_in, hidden_units),
        torch.nn.ReLU(),
        torch.nn.Linear(hidden_units, config.cols),
    )


def fit_surrogate(dataset: SurrogateDataset, config: CrossbarConfig,
                  hidden_units: int = 64, epochs: int = 200,
                  seed: int = 0, lr: float = 1e-3, batch_size: int = 256,
                  holdout: float = 0.1) -> SurrogateModel:
    """Fit the perceptron on ``dataset``; 10% held out for validation.

    The reported metadata includes the held-out MSE (in physical units
    squared) and the held-out output variance, so callers can judge fit
    quality scale-free.
    """
    if len(dataset) == 0:
        raise TrainingError("cannot fit a surrogate on an empty dataset")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    # natural current scale of the array, for output normalization
    i_scale = config.g_max * config.v_max * config.rows

    n = len(dataset)
    order = rng.permutation(n)
    n_val = max(1, int(round(holdout * n))) if n > 1 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    if train_idx.size == 0:
        train_idx = val_idx

    net = _build_net(config, hidden_units)
    model = SurrogateModel(net, config, i_scale, {})
    feats = model._features(dataset.v, dataset.g)
    targets = torch.from_numpy((dataset.i / i_scale).astype(np.float32))

    opt = torch.optim.Adam(net.parameters(), lr=lr)
    loss_fn = torch.nn.MSELoss()
    xt, yt = feats[train_idx], targets[train_idx]
    for epoch in range(epochs):
        perm = torch.from_numpy(rng.permutation(train_idx.size))
        for s in range(0, train_idx.size, batch_size):
            sel = perm[s:s + batch_size]
            opt.zero_grad()
            loss = loss_fn(net(xt[sel]), yt[sel])
            if not torch.isfinite(loss):
                raise TrainingError(f"surrogate loss became non-finite at epoch {epoch}")
            loss.backward()
            opt.step()

    net.eval()
    with torch.no_grad():
        ref = dataset.i[val_idx if n_val else train_idx]
        pred = model.predict(dataset.v[val_idx if n_val else train_idx],
                             dataset.g[val_idx if n_val else train_idx])
    mse = float(np.mean((pred - ref) ** 2))
    var = float(np.var(ref))
    model.metadata = {
        "holdout_mse": mse,
        "holdout_output_variance": var,
        "holdout_fraction": holdout,
        "hidden_units": hidden_units,
        "epochs": epochs,
        "seed": seed,
        "n_records": n,
        "dataset_hash": dataset.content_hash(),
    }
    return model


def surrogate_mvm(model: SurrogateModel, v, g) -> np.ndarray:
    """Evaluate the fitted surrogate; mirrors the solver call signature."""
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    out = model.predict(np.atleast_2d(v), np.asarray(g, dtype=np.float64))
    return out[0] if single else out
