"""Cell I-V laws, pluggable behind the ``device_model`` config string.

Every law is normalized so that its small-signal slope at v=0 equals the
programmed conductance, which keeps the ideal dot product the linear
limit of all models.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError


class DeviceLaw:
    linear = False

    def current(self, g, v):
        raise NotImplementedError

    def slope(self, g, v):
        raise NotImplementedError


class LinearLaw(DeviceLaw):
    """Ohmic cell: i = g * v."""

    linear = True

    def current(self, g, v):
        return g * v

    def slope(self, g, v):
        return g * np.ones_like(np.asarray(v, dtype=np.float64))


class SinhLaw(DeviceLaw):
    """Exponential-ish cell: i = g * sinh(beta * v) / beta."""

    def __init__(self, beta: float = 2.0):
        if beta <= 0:
            raise ConfigError(f"sinh device beta must be positive, got {beta}")
        self.beta = float(beta)

    def current(self, g, v):
        return g * np.sinh(self.beta * v) / self.beta

    def slope(self, g, v):
        return g * np.cosh(self.beta * v)


class Poly3Law(DeviceLaw):
    """Cubic correction: i = g * (v + c * v**3)."""

    def __init__(self, c: float = 0.1):
        if c < 0:
            raise ConfigError(f"poly3 device coefficient must be >= 0, got {c}")
        self.c = float(c)

    def current(self, g, v):
        return g * (v + self.c * v ** 3)

    def slope(self, g, v):
        return g * (1.0 + 3.0 * self.c * np.asarray(v, dtype=np.float64) ** 2)


DEVICE_MODELS = {
    "linear": LinearLaw,
    "sinh": SinhLaw,
    "poly3": Poly3Law,
}


def parse_device_model(spec: str) -> DeviceLaw:
    """Build a device law from a spec string like ``linear`` or ``sinh:2.5``."""
    name, _, arg = spec.partition(":")
    if name not in DEVICE_MODELS:
        raise ConfigError(
            f"unknown device model {spec!r}; known: {sorted(DEVICE_MODELS)}")
    cls = DEVICE_MODELS[name]
    if arg:
        try:
            return cls(float(arg))
        except TypeError:
            raise ConfigError(f"device model {name!r} takes no parameter")
    return cls()
