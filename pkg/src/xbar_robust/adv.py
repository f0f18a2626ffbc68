"""PGD attacks and the vanilla/adversarial training loops.

Attacks operate on the raw [0, 255] pixel scale (normalization lives
inside the model), take gradient-sign steps, and project onto the
l-infinity ball intersected with the pixel box after every step. The
attacker is non-adaptive: gradients always come from the float path
even when the defender evaluates on a crossbar backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError, TrainingError
from .nn.models import ResNet
from .nn.ops import sgd_step

PIXEL_MIN, PIXEL_MAX = 0.0, 255.0


@dataclass(frozen=True)
class AttackConfig:
    """l-inf PGD parameters on the [0, 255] pixel scale.

    ``step_size`` defaults to 2.5 * epsilon / steps so the ball is
    traversable with slack.
    """

    epsilon: float = 8.0
    steps: int = 50
    step_size: float | None = None
    random_start: bool = False

    def __post_init__(self):
        errors = []
        if self.epsilon < 0:
            errors.append(f"epsilon must be >= 0, got {self.epsilon}")
        if self.steps < 0:
            errors.append(f"steps must be >= 0, got {self.steps}")
        if self.step_size is not None and self.step_size <= 0 and self.steps > 0:
            errors.append(f"step_size must be positive, got {self.step_size}")
        if errors:
            raise ConfigError("invalid attack config: " + "; ".join(errors), errors)

    @property
    def alpha(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 2.5 * self.epsilon / self.steps if self.steps else 0.0


@dataclass(frozen=True)
class TrainConfig:
    """Supervised/adversarial training parameters.

    ``eps_train = 0`` degenerates to vanilla training. The learning rate
    steps down by ``lr_drop`` at the given epoch fractions.
    """

    epochs: int = 20
    batch_size: int = 128
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_drop: float = 0.1
    lr_drop_at: tuple = (0.5, 0.75)
    eps_train: float = 0.0
    attack_steps: int = 50
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        errors = []
        if self.epochs < 0:
            errors.append(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            errors.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            errors.append(f"lr must be positive, got {self.lr}")
        if self.eps_train < 0:
            errors.append(f"eps_train must be >= 0, got {self.eps_train}")
        if errors:
            raise ConfigError("invalid train config: " + "; ".join(errors), errors)


def pgd_attack(model: ResNet, x, y, cfg: AttackConfig,
               rng: np.random.Generator | None = None) -> torch.Tensor:
    """Iterated gradient-sign attack, projected after every step."""
    x = torch.as_tensor(x, dtype=torch.float32)
    y = torch.as_tensor(y, dtype=torch.long)
    if cfg.epsilon == 0 or cfg.steps == 0:
        return x.clone()

    was_training = model.training
    model.eval()
    try:
        lo = torch.clamp(x - cfg.epsilon, min=PIXEL_MIN)
        hi = torch.clamp(x + cfg.epsilon, max=PIXEL_MAX)
        x_adv = x.clone()
        if cfg.random_start:
            rng = rng or np.random.default_rng()
            noise = rng.uniform(-cfg.epsilon, cfg.epsilon, size=tuple(x.shape))
            x_adv = torch.clamp(x + torch.as_tensor(noise, dtype=torch.float32),
                                min=PIXEL_MIN, max=PIXEL_MAX)
            x_adv = torch.min(torch.max(x_adv, lo), hi)
        for _ in range(cfg.steps):
            x_adv = x_adv.detach().requires_grad_(True)
            loss = F.cross_entropy(model(x_adv), y)
            (grad,) = torch.autograd.grad(loss, x_adv)
            with torch.no_grad():
                x_adv = x_adv + cfg.alpha * grad.sign()
                x_adv = torch.min(torch.max(x_adv, lo), hi)
        return x_adv.detach()
    finally:
        model.train(was_training)


def augment_batch(images: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random crop from a zero-padded (pad 4) frame plus horizontal flip."""
    n, c, h, w = images.shape
    padded = np.pad(images, ((0, 0), (0, 0), (4, 4), (4, 4)))
    out = np.empty_like(images)
    offs = rng.integers(0, 9, size=(n, 2))
    flips = rng.random(n) < 0.5
    for i in range(n):
        dy, dx = offs[i]
        crop = padded[i, :, dy:dy + h, dx:dx + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out


def _run_training(model: ResNet, images: np.ndarray, labels: np.ndarray,
                  cfg: TrainConfig, attack: AttackConfig | None):
    """Shared loop behind vanilla_train/adversarial_train.

    Returns per-epoch history dicts. Deterministic for a fixed config:
    torch and numpy generators are seeded from cfg.seed, batches are
    drawn in a fixed shuffle order, and the model is updated in place.
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    n = images.shape[0]
    if n == 0:
        raise TrainingError("cannot train on an empty dataset")

    params = dict(model.named_parameters())
    state: dict = {}
    drop_epochs = {int(math.floor(f * cfg.epochs)) for f in cfg.lr_drop_at}
    lr = cfg.lr
    history = []
    last_stable = {k: v.detach().clone() for k, v in model.state_dict().items()}

    for epoch in range(cfg.epochs):
        if epoch in drop_epochs and epoch > 0:
            lr *= cfg.lr_drop
        order = rng.permutation(n)
        model.train()
        epoch_loss, epoch_hits, seen = 0.0, 0, 0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            xb = images[idx].astype(np.float32)
            yb = labels[idx]
            if cfg.augment:
                xb = augment_batch(xb, rng).astype(np.float32)
            if attack is not None and attack.epsilon > 0:
                xb_t = pgd_attack(model, xb, yb, attack, rng)
            else:
                xb_t = torch.as_tensor(xb)
            yb_t = torch.as_tensor(yb, dtype=torch.long)

            model.train()
            model.zero_grad(set_to_none=True)
            logits = model(xb_t)
            loss = F.cross_entropy(logits, yb_t)
            if not torch.isfinite(loss):
                model.load_state_dict(last_stable)
                raise TrainingError(
                    f"loss became non-finite in epoch {epoch}; "
                    f"restored last stable weights")
            loss.backward()
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            sgd_step(params, grads, state, lr, cfg.momentum, cfg.weight_decay)

            epoch_loss += float(loss.detach()) * len(idx)
            epoch_hits += int((logits.argmax(1) == yb_t).sum())
            seen += len(idx)
        last_stable = {k: v.detach().clone() for k, v in model.state_dict().items()}
        history.append({
            "epoch": epoch,
            "lr": lr,
            "train_loss": epoch_loss / seen,
            "train_acc": 100.0 * epoch_hits / seen,
        })
    model.eval()
    return history


def vanilla_train(model: ResNet, images, labels, cfg: TrainConfig):
    """Standard supervised training on clean images."""
    return _run_training(model, images, labels, cfg, attack=None)


def adversarial_train(model: ResNet, images, labels, cfg: TrainConfig):
    """PGD training: every batch is perturbed at eps_train before the update."""
    attack = AttackConfig(epsilon=cfg.eps_train, steps=cfg.attack_steps)
    return _run_training(model, images, labels, cfg, attack=attack)
