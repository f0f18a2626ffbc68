"""Forward/backward operations across backends, and plain SGD."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import UnsupportedBackendError
from ..fxp import PrecisionConfig
from ..mapper import Backend, LayerTrace, MappedLayer, lower_conv, lower_conv_weights
from ..xbar.config import CrossbarConfig
from .models import DigitalOps, ResNet, TraceOps, fold_conv_bn


class AnalogRunner:
    """A model programmed onto crossbars, reusable across batches.

    Batch-norm layers are folded into the preceding convolution before
    mapping (inference semantics), biases are added digitally, and
    everything between the MVM sites (ReLU, pooling, residual adds)
    runs in float, mirroring the digital path exactly.
    """

    def __init__(self, model: ResNet, backend, precision: PrecisionConfig,
                 xbar_config: CrossbarConfig | None = None, surrogate=None):
        self.model = model
        self.backend = Backend.parse(backend)
        if self.backend is Backend.FLOAT_REFERENCE:
            raise UnsupportedBackendError(
                "the float path needs no runner; call the model directly")
        self.layers = {}
        for name, mod, bn in model.mvm_sites():
            if isinstance(mod, torch.nn.Linear):
                w = mod.weight.detach().numpy().astype(np.float64)
                b = mod.bias.detach().numpy().astype(np.float64) \
                    if mod.bias is not None else None
                weight = lower_conv_weights(w)
            else:
                w, b = fold_conv_bn(mod, bn)
                weight = lower_conv_weights(w)
            self.layers[name] = MappedLayer(
                name, weight, b, self.backend, precision, xbar_config, surrogate)

    # ops protocol -----------------------------------------------------
    def conv_bn(self, name, conv, bn, x):
        layer = self.layers[name]
        cols, (ho, wo) = lower_conv(
            x.detach().numpy().astype(np.float64),
            conv.kernel_size[0], conv.kernel_size[1],
            conv.stride[0], conv.padding[0])
        batch = cols.shape[0]
        out = layer.execute(cols.reshape(-1, cols.shape[2]))
        out = out.reshape(batch, ho, wo, -1).transpose(0, 3, 1, 2)
        return torch.from_numpy(np.ascontiguousarray(out, dtype=np.float32))

    def linear(self, name, fc, x):
        out = self.layers[name].execute(x.detach().numpy().astype(np.float64))
        return torch.from_numpy(out.astype(np.float32))

    # ------------------------------------------------------------------
    def run(self, x, collect_traces: bool = False):
        ops = TraceOps(self) if collect_traces else self
        was_training = self.model.training
        self.model.eval()
        try:
            with torch.no_grad():
                logits = self.model(torch.as_tensor(x, dtype=torch.float32), ops=ops)
        finally:
            self.model.train(was_training)
        if collect_traces:
            traces = [LayerTrace(n, z.numpy(), self.backend.value)
                      for n, z in ops.traces]
            return logits, traces
        return logits


def forward(model: ResNet, x, backend="float_reference", *,
            precision: PrecisionConfig | None = None,
            xbar_config: CrossbarConfig | None = None,
            surrogate=None, collect_traces: bool = False, runner=None):
    """Run ``model`` on ``x`` under a backend; optionally collect traces.

    Returns logits, or (logits, [LayerTrace]) with ``collect_traces``.
    Crossbar backends program the model on every call unless a prebuilt
    ``runner`` is supplied.
    """
    backend = Backend.parse(backend)
    x = torch.as_tensor(x, dtype=torch.float32)
    if backend is Backend.FLOAT_REFERENCE:
        if collect_traces:
            ops = TraceOps(DigitalOps())
            with torch.no_grad():
                logits = model(x, ops=ops)
            traces = [LayerTrace(n, z.numpy(), backend.value) for n, z in ops.traces]
            return logits, traces
        with torch.no_grad():
            return model(x)
    if runner is None:
        runner = AnalogRunner(model, backend, precision, xbar_config, surrogate)
    return runner.run(x, collect_traces=collect_traces)


def backward_input(model: ResNet, x, y, backend="float_reference") -> torch.Tensor:
    """Gradient of the cross-entropy loss w.r.t. the input pixels.

    Only the float path is differentiable; the attacker's threat model
    assumes accurate digital hardware, so analog backends refuse.
    """
    if Backend.parse(backend) is not Backend.FLOAT_REFERENCE:
        raise UnsupportedBackendError(
            f"input gradients are only defined on the float backend, "
            f"not {Backend.parse(backend).value}")
    x = torch.as_tensor(x, dtype=torch.float32).clone().requires_grad_(True)
    y = torch.as_tensor(y, dtype=torch.long)
    loss = F.cross_entropy(model(x), y)
    (grad,) = torch.autograd.grad(loss, x)
    return grad


def backward_params(model: ResNet, x, y):
    """(loss value, {name: gradient}) for one batch on the float path."""
    x = torch.as_tensor(x, dtype=torch.float32)
    y = torch.as_tensor(y, dtype=torch.long)
    model.zero_grad(set_to_none=True)
    loss = F.cross_entropy(model(x), y)
    loss.backward()
    grads = {n: p.grad.detach().clone()
             for n, p in model.named_parameters() if p.grad is not None}
    return float(loss.detach()), grads


def sgd_step(params: dict, grads: dict, state: dict, lr: float,
             momentum: float = 0.0, weight_decay: float = 0.0):
    """One SGD update with momentum and decoupled-from-nothing weight decay.

    ``state`` carries momentum buffers keyed like ``params`` and is
    created on first use. Matches the classic update: buf = mu*buf +
    (g + wd*p); p -= lr*buf.
    """
    with torch.no_grad():
        for name, p in params.items():
            if name not in grads:
                continue
            d = grads[name] + weight_decay * p
            if momentum:
                buf = state.get(name)
                if buf is None:
                    buf = torch.zeros_like(p)
                    state[name] = buf
                buf.mul_(momentum).add_(d)
                d = buf
            p.add_(d, alpha=-lr)
