"""The bit-sliced MVM pipeline across crossbar backends.

All crossbar backends share one path: quantize inputs, stream into
sign-magnitude planes (the element sign rides on the bipolar drive
voltage), run one array pass per (stream, slice, tile), convert
currents back to integer partials, recombine by shift-add at o_bit,
accumulate row tiles digitally, and dequantize, adding biases
digitally. Backends differ only in the per-pass kernel:

* ideal_crossbar: exact integer dot product per plane pair;
* nodal_crossbar: the circuit solver's effective transfer matrix;
* surrogate_crossbar: the fitted perceptron;
* float_reference: plain floating MVM, bypassing quantization entirely.

Signed weights map to differential column pairs (W+ and W- interleaved
in adjacent columns of the same array) and the periphery senses the
pair difference I+ - I- before conversion, so the g_min pedestal
current cancels in the analog domain the way it does in real
differential designs. Column tiles are therefore planned at pair
granularity.

Integer partials are produced by float64 matmuls; every intermediate is
an exact integer well below 2**53, so the ideal path is bit-exact while
still running on BLAS.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .. import fxp
from ..errors import MappingError, UnsupportedBackendError
from ..xbar.config import CrossbarConfig, program
from ..xbar.nodal import CrossbarNetwork
from ..xbar.surrogate import SurrogateModel
from .tiling import TilePlan, plan_tiles

_CHUNK_ROWS = 8192  # positions quantized/streamed per block, bounds memory


class Backend(str, enum.Enum):
    FLOAT_REFERENCE = "float_reference"
    IDEAL_CROSSBAR = "ideal_crossbar"
    NODAL_CROSSBAR = "nodal_crossbar"
    SURROGATE_CROSSBAR = "surrogate_crossbar"

    @classmethod
    def parse(cls, value) -> "Backend":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise UnsupportedBackendError(
                f"unknown backend {value!r}; known: {[b.value for b in cls]}")


@dataclass
class LayerTrace:
    """Pre-activation output of one mapped layer under one backend."""

    layer_id: str
    z: np.ndarray
    backend: str


def fixed_point_mvm_reference(x: np.ndarray, w: np.ndarray, bias,
                              precision: fxp.PrecisionConfig) -> np.ndarray:
    """Direct fixed-point MVM in integer arithmetic; oracle for the pipeline."""
    xq = fxp.quantize(x, precision.i_bit, precision.i_i_bit)
    wq = fxp.quantize(w, precision.w_bit, precision.w_i_bit)
    acc = xq.raw @ wq.raw  # int64 matmul
    out = acc.astype(np.float64) * (2.0 ** -(xq.frac_bits + wq.frac_bits))
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)
    return out


class MappedLayer:
    """One conv/linear layer programmed onto crossbar tiles.

    ``weight`` is the lowered (rows x c_out) matrix. Layers with any
    negative weight use differential pairs (2 physical columns per
    output); all-non-negative layers use single columns with the g_min
    pedestal removed digitally.
    """

    def __init__(self, layer_id: str, weight: np.ndarray, bias,
                 backend, precision: fxp.PrecisionConfig,
                 xbar_config: CrossbarConfig | None = None,
                 surrogate: SurrogateModel | None = None):
        self.layer_id = layer_id
        self.backend = Backend.parse(backend)
        self.precision = precision
        self.xbar_config = xbar_config
        self.surrogate = surrogate
        self.weight = np.asarray(weight, dtype=np.float64)
        if self.weight.ndim != 2:
            raise MappingError(f"lowered weight must be 2-D, got {self.weight.shape}")
        self.bias = None if bias is None else np.asarray(bias, dtype=np.float64)
        self.rows, self.c_out = self.weight.shape
        self.weight_saturated = 0
        self.input_saturated = 0

        if self.backend is Backend.FLOAT_REFERENCE:
            self.plan: TilePlan | None = None
            return
        if xbar_config is None:
            raise MappingError("crossbar backends require a crossbar config")
        if self.backend is Backend.SURROGATE_CROSSBAR and surrogate is None:
            raise MappingError("surrogate backend requires a fitted surrogate model")

        wq = fxp.quantize(self.weight, precision.w_bit, precision.w_i_bit)
        self.weight_saturated = wq.saturated
        self._w_frac = wq.frac_bits
        self.differential = bool(np.any(wq.raw < 0))
        if self.differential:
            if xbar_config.cols < 2:
                raise MappingError(
                    f"layer {layer_id}: signed weights need differential "
                    f"column pairs, but the crossbar has a single column")
            logical = np.empty((self.rows, 2 * self.c_out), dtype=np.int64)
            logical[:, 0::2] = np.maximum(wq.raw, 0)
            logical[:, 1::2] = np.maximum(-wq.raw, 0)
            # pair-granular column tiling keeps each pair in one array
            self.plan = plan_tiles(self.rows, self.c_out,
                                   xbar_config.rows, xbar_config.cols // 2)
        else:
            logical = wq.raw
            self.plan = plan_tiles(self.rows, self.c_out,
                                   xbar_config.rows, xbar_config.cols)

        slices = fxp.slice_planes(logical, precision.w_bit, precision.w_w,
                                  signed=False)
        pair = 2 if self.differential else 1
        self._kernels = []  # [tile][slice] -> backend-specific kernel data
        for tile in self.plan.tiles:
            per_slice = []
            for b in range(slices.n_planes):
                plane = slices.planes[b, tile.r0:tile.r1,
                                      pair * tile.c0:pair * tile.c1]
                per_slice.append(self._prepare_kernel(plane))
            self._kernels.append(per_slice)

    # ------------------------------------------------------------------
    def _prepare_kernel(self, plane: np.ndarray):
        cfg = self.xbar_config
        if self.backend is Backend.IDEAL_CROSSBAR:
            return plane.astype(np.float64)
        g = program(plane, cfg, self.precision.w_w)
        if self.backend is Backend.NODAL_CROSSBAR:
            t = CrossbarNetwork(g, cfg).transfer_matrix()
            return t[:plane.shape[1], :plane.shape[0]].copy()
        return g  # surrogate holds the full programmed array

    def _run_kernel(self, kernel, streams: np.ndarray, n_cols: int) -> np.ndarray:
        """Integer partials (n_streams, chunk, out_cols) for one slice plane.

        ``n_cols`` is the physical column count of the tile; for
        differential layers the returned partials are already the sensed
        pair differences (out_cols = n_cols / 2).
        """
        cfg = self.xbar_config
        p = self.precision
        if self.backend is Backend.IDEAL_CROSSBAR:
            ints = streams @ kernel
            if self.differential:
                return ints[..., 0::2] - ints[..., 1::2]
            return ints
        dv = cfg.v_max / ((1 << p.i_w) - 1)
        dg = (cfg.g_max - cfg.g_min) / ((1 << p.w_w) - 1)
        if self.backend is Backend.NODAL_CROSSBAR:
            currents = (streams * dv) @ kernel.T
        else:
            n_streams, chunk, r = streams.shape
            volts = np.zeros((n_streams * chunk, cfg.rows))
            volts[:, :r] = streams.reshape(-1, r) * dv
            out = self.surrogate.predict(volts, kernel)
            currents = out.reshape(n_streams, chunk, cfg.cols)[:, :, :n_cols]
        if self.differential:
            sensed = currents[..., 0::2] - currents[..., 1::2]
            return np.rint(sensed / (dv * dg))
        pedestal = (cfg.g_min / dg) * streams.sum(axis=2, keepdims=True)
        return np.rint(currents / (dv * dg) - pedestal)

    # ------------------------------------------------------------------
    def execute(self, x_cols: np.ndarray) -> np.ndarray:
        """Run the layer on lowered input vectors (n_positions, rows)."""
        x_cols = np.asarray(x_cols, dtype=np.float64)
        if x_cols.ndim != 2 or x_cols.shape[1] != self.rows:
            raise MappingError(
                f"layer {self.layer_id}: input {x_cols.shape} does not match "
                f"{self.rows} lowered rows")
        if self.backend is Backend.FLOAT_REFERENCE:
            out = x_cols @ self.weight
            return out + self.bias if self.bias is not None else out

        out = np.empty((x_cols.shape[0], self.c_out))
        for s in range(0, x_cols.shape[0], _CHUNK_ROWS):
            out[s:s + _CHUNK_ROWS] = self._execute_chunk(x_cols[s:s + _CHUNK_ROWS])
        if self.bias is not None:
            out = out + self.bias
        return out

    def _execute_chunk(self, x_chunk: np.ndarray) -> np.ndarray:
        p = self.precision
        xq = fxp.quantize(x_chunk, p.i_bit, p.i_i_bit)
        self.input_saturated += xq.saturated
        mags, signs = fxp.stream_inputs_magnitude(xq, p.i_w)
        # bipolar drive: per-element sign rides on the stream voltage
        streams = mags.planes.astype(np.float64) * signs[None, :, :]
        n_streams = streams.shape[0]
        pair = 2 if self.differential else 1

        acc = np.zeros((x_chunk.shape[0], self.c_out), dtype=np.int64)
        for t_idx, tile in enumerate(self.plan.tiles):
            sub = streams[:, :, tile.r0:tile.r1]
            partials = np.empty((n_streams, p.n_slices,
                                 x_chunk.shape[0], tile.cols), dtype=np.int64)
            for b in range(p.n_slices):
                try:
                    partials[:, b] = self._run_kernel(
                        self._kernels[t_idx][b], sub, pair * tile.cols)
                except Exception as exc:
                    raise MappingError(
                        f"layer {self.layer_id}: kernel failed on tile "
                        f"rows[{tile.r0}:{tile.r1}] cols[{tile.c0}:{tile.c1}] "
                        f"slice {b}: {exc}") from exc
            acc[:, tile.c0:tile.c1] += fxp.shift_add_recombine(
                partials, p.i_w, p.w_w, signed_streams=False, o_bit=p.o_bit)

        lo, hi = -(1 << (p.o_bit - 1)), (1 << (p.o_bit - 1)) - 1
        if acc.size and (acc.min() < lo or acc.max() > hi):
            raise OverflowError(
                f"layer {self.layer_id}: accumulated partial sums exceed "
                f"o_bit={p.o_bit}")
        return acc.astype(np.float64) * (2.0 ** -(xq.frac_bits + self._w_frac))


def execute_layer(layer_id: str, weight, bias, x_cols, backend,
                  precision: fxp.PrecisionConfig,
                  xbar_config: CrossbarConfig | None = None,
                  surrogate: SurrogateModel | None = None):
    """One-shot program + execute; returns (output, LayerTrace)."""
    layer = MappedLayer(layer_id, weight, bias, backend, precision,
                        xbar_config, surrogate)
    out = layer.execute(np.asarray(x_cols, dtype=np.float64))
    return out, LayerTrace(layer_id, out, Backend.parse(backend).value)
