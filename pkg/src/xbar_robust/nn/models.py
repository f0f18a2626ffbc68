"""CIFAR-style residual networks with a pluggable MVM path.

Architectures follow the usual 3-group layout: a 16-channel stem conv,
three groups of basic blocks at strides 1/2/2, global average pooling,
and a linear classifier. Width-4 variants inflate the group widths
only; the ``tiny`` variant shrinks everything to width 8 for desk-scale
experiments.

``forward`` takes an ``ops`` object so the same structural walk serves
both the digital path (plain torch) and the crossbar-mapped path; ops
see every conv+bn pair and the classifier as named MVM sites, which is
also where pre-activation traces are collected.

Pixel convention: models eat raw [0, 255] inputs and normalize in the
first stage, so attack box constraints apply on the pixel scale.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError


class DigitalOps:
    """Default MVM path: exact torch convolutions."""

    def conv_bn(self, name, conv, bn, x):
        return bn(conv(x))

    def linear(self, name, fc, x):
        return fc(x)


class TraceOps:
    """Wraps another ops object and records every pre-activation output."""

    def __init__(self, base):
        self.base = base
        self.traces = []  # (name, tensor) in execution order

    def conv_bn(self, name, conv, bn, x):
        z = self.base.conv_bn(name, conv, bn, x)
        self.traces.append((name, z.detach().clone()))
        return z

    def linear(self, name, fc, x):
        z = self.base.linear(name, fc, x)
        self.traces.append((name, z.detach().clone()))
        return z


class BasicBlock(nn.Module):
    def __init__(self, name, c_in, c_out, stride):
        super().__init__()
        self.name = name
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(c_out)
        if stride != 1 or c_in != c_out:
            self.proj = nn.Conv2d(c_in, c_out, 1, stride=stride, bias=False)
            self.proj_bn = nn.BatchNorm2d(c_out)
        else:
            self.proj = None

    def forward(self, x, ops=None):
        ops = ops or _DIGITAL
        h = F.relu(ops.conv_bn(f"{self.name}.conv1", self.conv1, self.bn1, x))
        h = ops.conv_bn(f"{self.name}.conv2", self.conv2, self.bn2, h)
        if self.proj is not None:
            x = ops.conv_bn(f"{self.name}.proj", self.proj, self.proj_bn, x)
        return F.relu(h + x)


class ResNet(nn.Module):
    def __init__(self, name: str, blocks, widths, num_classes: int):
        super().__init__()
        self.model_name = name
        self.num_classes = num_classes
        stem, g1, g2, g3 = widths
        self.conv0 = nn.Conv2d(3, stem, 3, stride=1, padding=1, bias=False)
        self.bn0 = nn.BatchNorm2d(stem)
        self.groups = nn.ModuleList()
        c_in = stem
        for gi, (n_blocks, c_out) in enumerate(zip(blocks, (g1, g2, g3))):
            group = nn.ModuleList()
            for bi in range(n_blocks):
                stride = 2 if (gi > 0 and bi == 0) else 1
                group.append(BasicBlock(f"g{gi}b{bi}", c_in, c_out, stride))
                c_in = c_out
            self.groups.append(group)
        self.fc = nn.Linear(c_in, num_classes)
        # input normalization on the raw [0, 255] pixel scale
        self.register_buffer("input_mean",
                             torch.tensor([125.3, 123.0, 113.9]).view(1, 3, 1, 1))
        self.register_buffer("input_std",
                             torch.tensor([63.0, 62.1, 66.7]).view(1, 3, 1, 1))
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_uniform_(m.weight, nonlinearity="relu")
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)
            elif isinstance(m, nn.Linear):
                nn.init.kaiming_uniform_(m.weight, nonlinearity="relu")
                nn.init.zeros_(m.bias)

    def set_input_stats(self, mean, std):
        self.input_mean.copy_(torch.as_tensor(mean, dtype=torch.float32).view(1, 3, 1, 1))
        self.input_std.copy_(torch.as_tensor(std, dtype=torch.float32).view(1, 3, 1, 1))

    def forward(self, x, ops=None):
        ops = ops or _DIGITAL
        x = (x - self.input_mean) / self.input_std
        h = F.relu(ops.conv_bn("conv0", self.conv0, self.bn0, x))
        for group in self.groups:
            for block in group:
                h = block(h, ops)
        h = h.mean(dim=(2, 3))  # global average pool
        return ops.linear("fc", self.fc, h)

    def mvm_sites(self):
        """(name, conv, bn) for every mapped conv plus ("fc", fc, None), in order."""
        sites = [("conv0", self.conv0, self.bn0)]
        for group in self.groups:
            for b in group:
                sites.append((f"{b.name}.conv1", b.conv1, b.bn1))
                sites.append((f"{b.name}.conv2", b.conv2, b.bn2))
                if b.proj is not None:
                    sites.append((f"{b.name}.proj", b.proj, b.proj_bn))
        sites.append(("fc", self.fc, None))
        return sites


_DIGITAL = DigitalOps()

# name -> (blocks per group, (stem, g1, g2, g3) widths)
MODEL_SPECS = {
    "resnet10w1": ((1, 1, 2), (16, 16, 32, 64)),
    "resnet10w4": ((1, 1, 2), (16, 64, 128, 256)),
    "resnet20w1": ((3, 3, 3), (16, 16, 32, 64)),
    "resnet20w4": ((3, 3, 3), (16, 64, 128, 256)),
    "resnet10-tiny": ((1, 1, 2), (8, 8, 16, 32)),
}


def build_model(name: str, num_classes: int = 10) -> ResNet:
    if name not in MODEL_SPECS:
        raise ConfigError(f"unknown model {name!r}; known: {sorted(MODEL_SPECS)}")
    blocks, widths = MODEL_SPECS[name]
    return ResNet(name, blocks, widths, num_classes)


def fold_conv_bn(conv: nn.Conv2d, bn: nn.BatchNorm2d | None):
    """Inference-time batch-norm fold: returns (weight, bias) numpy arrays.

    Uses the running statistics, so the model must have them populated
    (any trained or evaluated model does).
    """
    w = conv.weight.detach().numpy().astype(np.float64)
    b = (conv.bias.detach().numpy().astype(np.float64)
         if conv.bias is not None else np.zeros(w.shape[0]))
    if bn is None:
        return w, b
    gamma = bn.weight.detach().numpy().astype(np.float64)
    beta = bn.bias.detach().numpy().astype(np.float64)
    mean = bn.running_mean.detach().numpy().astype(np.float64)
    var = bn.running_var.detach().numpy().astype(np.float64)
    scale = gamma / np.sqrt(var + bn.eps)
    w_f = w * scale[:, None, None, None]
    b_f = (b - mean) * scale + beta
    return w_f, b_f
