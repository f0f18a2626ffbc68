"""Crossbar geometry, device/parasitic parameters, and the ideal model."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError, MappingError

ConductanceMatrix = np.ndarray  # (rows, cols) siemens


@dataclass(frozen=True)
class CrossbarConfig:
    """Geometry plus electrical parameters of one physical array.

    ``r_source``/``r_sink`` are the per-line driver and sense resistances,
    ``r_wire`` the resistance of one inter-cell wire segment. ``r_on`` is
    the minimum device resistance and ``r_ratio = r_off / r_on`` sets the
    conductance range [g_max / r_ratio, g_max].
    """

    rows: int = 64
    cols: int = 64
    r_source: float = 0.0
    r_sink: float = 0.0
    r_wire: float = 0.0
    r_on: float = 100e3
    r_ratio: float = 10.0
    v_max: float = 1.0
    device_model: str = "linear"

    def __post_init__(self):
        errors = []
        if self.rows < 1 or self.cols < 1:
            errors.append(f"rows/cols must be >= 1, got {self.rows}x{self.cols}")
        for name in ("r_source", "r_sink", "r_wire"):
            if getattr(self, name) < 0 or not np.isfinite(getattr(self, name)):
                errors.append(f"{name} must be finite and >= 0")
        if self.r_on <= 0:
            errors.append(f"r_on must be positive, got {self.r_on}")
        if self.r_ratio <= 1:
            errors.append(f"r_ratio must exceed 1, got {self.r_ratio}")
        if self.v_max <= 0:
            errors.append(f"v_max must be positive, got {self.v_max}")
        if errors:
            raise ConfigError("invalid crossbar config: " + "; ".join(errors), errors)

    @property
    def g_max(self) -> float:
        return 1.0 / self.r_on

    @property
    def g_min(self) -> float:
        return self.g_max / self.r_ratio

    def with_size(self, rows: int, cols: int) -> "CrossbarConfig":
        return replace(self, rows=rows, cols=cols)


# Named array models. Parasitics are shared between the two sizes and were
# calibrated (see ``xbar.nf.calibrate_r_wire`` and the nf-calibrate harness
# command) so the 32x32 array lands at a nonideality factor near 0.14 and
# the 64x64 array near 0.26 at r_on = 100 kOhm.
XBAR_PRESETS = {
    "32x32_100k": CrossbarConfig(rows=32, cols=32, r_on=100e3, r_ratio=10.0,
                                 r_source=400.0, r_sink=400.0, r_wire=6.0),
    "64x64_100k": CrossbarConfig(rows=64, cols=64, r_on=100e3, r_ratio=10.0,
                                 r_source=400.0, r_sink=400.0, r_wire=6.0),
}


def program(weight_slice_plane, config: CrossbarConfig, w_w: int) -> ConductanceMatrix:
    """Map an unsigned slice plane onto conductance levels.

    Levels are spaced linearly: g = g_min + s * (g_max - g_min) / (2**w_w - 1).
    The plane may be smaller than (rows, cols); unused cells sit at g_min,
    the lowest programmable state.
    """
    plane = np.asarray(weight_slice_plane)
    if plane.ndim != 2:
        raise MappingError(f"slice plane must be 2-D, got shape {plane.shape}")
    if plane.shape[0] > config.rows or plane.shape[1] > config.cols:
        raise MappingError(
            f"slice plane {plane.shape} exceeds crossbar {config.rows}x{config.cols}")
    levels = (1 << w_w) - 1
    if plane.min() < 0 or plane.max() > levels:
        raise MappingError(
            f"slice plane values outside [0, {levels}] for w_w={w_w}")
    g = np.full((config.rows, config.cols), config.g_min, dtype=np.float64)
    span = (config.g_max - config.g_min) / levels
    g[:plane.shape[0], :plane.shape[1]] = config.g_min + plane.astype(np.float64) * span
    return g


def ideal_mvm(v, g: ConductanceMatrix) -> np.ndarray:
    """Parasitic-free column currents: I_j = sum_i V_i * G_ij."""
    v = np.asarray(v, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if v.shape[-1] != g.shape[0]:
        raise MappingError(
            f"voltage length {v.shape[-1]} does not match {g.shape[0]} rows")
    return v @ g
