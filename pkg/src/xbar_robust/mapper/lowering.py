"""Lowering convolutions to matrix-vector products (im2col)."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import MappingError


def conv_output_hw(h: int, w: int, kh: int, kw: int, stride: int, padding: int):
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise MappingError(
            f"kernel {kh}x{kw} stride {stride} pad {padding} does not fit "
            f"a {h}x{w} input")
    return ho, wo


def lower_conv(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    """im2col: one input vector of length kh*kw*C per output position.

    ``x`` is (batch, channels, h, w); returns (cols, (ho, wo)) where cols
    is (batch, ho*wo, kh*kw*channels) with the feature axis ordered
    (channel, kernel row, kernel col) to match ``lower_conv_weights``.
    """
    if x.ndim != 4:
        raise MappingError(f"expected a 4-D activation tensor, got shape {x.shape}")
    b, c, h, w = x.shape
    ho, wo = conv_output_hw(h, w, kh, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (b, c, ho, wo, kh, kw) -> (b, ho, wo, c, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols), (ho, wo)


def lower_conv_weights(w: np.ndarray) -> np.ndarray:
    """(c_out, c_in, kh, kw) kernel -> (kh*kw*c_in, c_out) weight matrix."""
    if w.ndim == 2:  # linear layer given as (out, in)
        return np.ascontiguousarray(w.T)
    if w.ndim != 4:
        raise MappingError(f"expected a 4-D kernel, got shape {w.shape}")
    c_out = w.shape[0]
    return np.ascontiguousarray(w.reshape(c_out, -1).T)
