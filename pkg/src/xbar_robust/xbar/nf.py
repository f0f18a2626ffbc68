"""Nonideality factor: average relative deviation from the ideal dot product.

NF = mean over random (V, G) draws and output columns of
(I_ideal - I_nonideal) / I_ideal, with V uniform on [0, v_max] and G
uniform on [g_min, g_max]. Columns whose ideal output magnitude falls
below ``tau`` are excluded from the average.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError
from .config import CrossbarConfig, ideal_mvm
from .nodal import CrossbarNetwork

DEFAULT_TAU = 1e-12


def nodal_mvm_fn(config: CrossbarConfig):
    """(V, G) -> nonideal currents, building a fresh network per call."""

    def mvm(v, g):
        return CrossbarNetwork(g, config).solve(v)

    return mvm


def compute_nf(mvm, config: CrossbarConfig, samples: int,
               rng: np.random.Generator, tau: float = DEFAULT_TAU) -> float:
    """Average relative output deviation of ``mvm`` against the ideal model."""
    if samples < 1:
        raise NumericalError(f"need at least one sample, got {samples}")
    devs = []
    for _ in range(samples):
        v = rng.uniform(0.0, config.v_max, size=config.rows)
        g = rng.uniform(config.g_min, config.g_max, size=(config.rows, config.cols))
        ideal = ideal_mvm(v, g)
        ni = np.asarray(mvm(v, g), dtype=np.float64)
        keep = np.abs(ideal) >= tau
        if np.any(keep):
            devs.append((ideal[keep] - ni[keep]) / ideal[keep])
    if not devs:
        raise NumericalError(
            "all sampled outputs fell below the exclusion threshold; "
            "nonideality factor is undefined for this configuration")
    return float(np.mean(np.concatenate(devs)))


def nodal_nf(config: CrossbarConfig, samples: int,
             rng: np.random.Generator, tau: float = DEFAULT_TAU) -> float:
    """NF of the circuit-level model for ``config``."""
    return compute_nf(nodal_mvm_fn(config), config, samples, rng, tau)


def calibrate_r_wire(config: CrossbarConfig, target_nf: float, samples: int,
                     seed: int, r_wire_max: float = 500.0,
                     tol: float = 0.005, max_steps: int = 40) -> tuple[float, float]:
    """Bisect r_wire until the nodal NF matches ``target_nf``.

    NF is monotone non-decreasing in r_wire, so plain bisection applies.
    Every evaluation reuses the same seed so the objective is a fixed
    deterministic function of r_wire. Returns (r_wire, achieved_nf).
    """

    def nf_at(rw: float) -> float:
        cfg = CrossbarConfig(**{**config.__dict__, "r_wire": rw})
        return nodal_nf(cfg, samples, np.random.default_rng(seed))

    lo, hi = 0.0, r_wire_max
    nf_lo, nf_hi = nf_at(lo), nf_at(hi)
    if target_nf <= nf_lo:
        return lo, nf_lo
    while nf_hi < target_nf:
        hi *= 2.0
        if hi > 1e6:
            raise NumericalError(
                f"target NF {target_nf} unreachable below r_wire = 1 MOhm")
        nf_hi = nf_at(hi)
    nf_mid = nf_hi
    mid = hi
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        nf_mid = nf_at(mid)
        if abs(nf_mid - target_nf) <= tol:
            break
        if nf_mid < target_nf:
            lo = mid
        else:
            hi = mid
    return mid, nf_mid
