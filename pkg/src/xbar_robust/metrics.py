"""Noise-stability and robustness metrics over layer traces.

SNR per layer is log10 of signal power over noise power, where noise is
the deviation of the analog pre-activation outputs from the digital
ones; noise sensitivity (NS) is noise power over digital signal power.
Both default to the ratio-of-sums reading: powers are summed over all
traced samples before the ratio is taken (the sum-of-ratios alternative
is available via ``mode`` for sensitivity checks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError
from .adv import AttackConfig, pgd_attack
from .mapper import Backend, LayerTrace
from .nn.models import ResNet
from .nn.ops import AnalogRunner, forward


@dataclass
class LayerNoiseReport:
    layer_id: str
    snr: float  # log10 scale; +inf when the traces match exactly
    ns: float
    n: int


@dataclass
class RobustnessPoint:
    epsilon: float
    digital_acc: float
    analog_acc: float

    @property
    def gain(self) -> float:
        return self.analog_acc - self.digital_acc


def _pair_traces(traces_digital, traces_analog):
    if len(traces_digital) != len(traces_analog):
        raise ConfigError(
            f"trace sets differ in length: {len(traces_digital)} vs "
            f"{len(traces_analog)}")
    for td, ta in zip(traces_digital, traces_analog):
        if td.layer_id != ta.layer_id:
            raise ConfigError(
                f"trace mismatch: {td.layer_id} vs {ta.layer_id}")
        if td.z.shape != ta.z.shape:
            raise ConfigError(
                f"layer {td.layer_id}: trace shapes differ "
                f"{td.z.shape} vs {ta.z.shape}")
        yield td.layer_id, np.asarray(td.z, dtype=np.float64), \
            np.asarray(ta.z, dtype=np.float64)


def _power_per_sample(z: np.ndarray) -> np.ndarray:
    return (z.reshape(z.shape[0], -1) ** 2).sum(axis=1)


def snr(traces_digital, traces_analog, mode: str = "ratio_of_sums"):
    """Per-layer signal-to-noise of analog traces against digital ones."""
    out = []
    for layer_id, zd, za in _pair_traces(traces_digital, traces_analog):
        sig = _power_per_sample(za)
        noise = _power_per_sample(zd - za)
        if mode == "ratio_of_sums":
            val = math.inf if noise.sum() == 0 else \
                math.log10(sig.sum() / noise.sum())
        elif mode == "sum_of_ratios":
            val = math.inf if np.any(noise == 0) else \
                math.log10(float((sig / noise).sum()))
        else:
            raise ConfigError(f"unknown SNR mode {mode!r}")
        out.append((layer_id, val, zd.shape[0]))
    return out


def noise_sensitivity(traces_digital, traces_analog, mode: str = "ratio_of_sums"):
    """Per-layer noise power relative to the digital signal power."""
    out = []
    for layer_id, zd, za in _pair_traces(traces_digital, traces_analog):
        noise = _power_per_sample(zd - za)
        sig = _power_per_sample(zd)
        if mode == "ratio_of_sums":
            total_sig = sig.sum()
            if total_sig == 0:
                raise ConfigError(
                    f"layer {layer_id}: digital signal power is zero")
            val = float(noise.sum() / total_sig)
        elif mode == "sum_of_ratios":
            keep = sig > 0  # zero-signal samples are excluded, flagged by count
            val = float((noise[keep] / sig[keep]).sum())
        else:
            raise ConfigError(f"unknown NS mode {mode!r}")
        out.append((layer_id, val, zd.shape[0]))
    return out


def layer_noise_report(traces_digital, traces_analog,
                       mode: str = "ratio_of_sums") -> list[LayerNoiseReport]:
    s = snr(traces_digital, traces_analog, mode)
    ns = noise_sensitivity(traces_digital, traces_analog, mode)
    return [LayerNoiseReport(lid, sv, nv, n)
            for (lid, sv, n), (_, nv, _) in zip(s, ns)]


def collect_traces(model: ResNet, images, backend, *, precision=None,
                   xbar_config=None, surrogate=None, runner=None,
                   batch_size: int = 64):
    """Traces over a sample set, batched, concatenated per layer."""
    images = np.asarray(images, dtype=np.float32)
    if runner is None and Backend.parse(backend) is not Backend.FLOAT_REFERENCE:
        runner = AnalogRunner(model, backend, precision, xbar_config, surrogate)
    per_layer: dict[str, list] = {}
    order: list[str] = []
    for s in range(0, images.shape[0], batch_size):
        xb = images[s:s + batch_size]
        _, traces = forward(model, xb, backend, precision=precision,
                            xbar_config=xbar_config, surrogate=surrogate,
                            collect_traces=True, runner=runner)
        for t in traces:
            if t.layer_id not in per_layer:
                per_layer[t.layer_id] = []
                order.append(t.layer_id)
            per_layer[t.layer_id].append(np.asarray(t.z))
    return [LayerTrace(lid, np.concatenate(per_layer[lid], axis=0),
                       Backend.parse(backend).value) for lid in order]


def evaluate_accuracy(model: ResNet, images, labels, backend="float_reference",
                      attack_cfg: AttackConfig | None = None, *,
                      precision=None, xbar_config=None, surrogate=None,
                      runner=None, batch_size: int = 128) -> float:
    """Top-1 accuracy in percent; adversarial inputs come from the float path."""
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if images.shape[0] == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    if runner is None and Backend.parse(backend) is not Backend.FLOAT_REFERENCE:
        runner = AnalogRunner(model, backend, precision, xbar_config, surrogate)
    hits = 0
    for s in range(0, images.shape[0], batch_size):
        xb = images[s:s + batch_size]
        yb = labels[s:s + batch_size]
        if attack_cfg is not None and attack_cfg.epsilon > 0:
            xb = pgd_attack(model, xb, yb, attack_cfg).numpy()
        logits = forward(model, xb, backend, precision=precision,
                         xbar_config=xbar_config, surrogate=surrogate,
                         runner=runner)
        hits += int((logits.argmax(1).numpy() == yb).sum())
    return 100.0 * hits / images.shape[0]


def robustness_curve(model: ResNet, images, labels, epsilons, *,
                     attack_steps: int = 50, precision=None, xbar_config=None,
                     analog_backend="nodal_crossbar", surrogate=None,
                     batch_size: int = 128) -> list[RobustnessPoint]:
    """Digital vs analog adversarial accuracy over an epsilon sweep.

    The same float-path adversarial examples are evaluated on both
    backends at each epsilon; gain = analog - digital.
    """
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    analog_backend = Backend.parse(analog_backend)
    if analog_backend is Backend.FLOAT_REFERENCE:
        runner = None  # degenerate sweep: both sides digital, gain == 0
    else:
        runner = AnalogRunner(model, analog_backend, precision, xbar_config,
                              surrogate)
    points = []
    for eps in epsilons:
        cfg = AttackConfig(epsilon=float(eps), steps=attack_steps)
        hits_d, hits_a = 0, 0
        for s in range(0, images.shape[0], batch_size):
            xb = images[s:s + batch_size]
            yb = labels[s:s + batch_size]
            if eps > 0:
                xb = pgd_attack(model, xb, yb, cfg).numpy()
            yb_t = torch.as_tensor(yb)
            logits_d = forward(model, xb, "float_reference")
            logits_a = logits_d if runner is None else runner.run(xb)
            hits_d += int((logits_d.argmax(1) == yb_t).sum())
            hits_a += int((logits_a.argmax(1) == yb_t).sum())
        points.append(RobustnessPoint(float(eps),
                                      100.0 * hits_d / images.shape[0],
                                      100.0 * hits_a / images.shape[0]))
    return points
