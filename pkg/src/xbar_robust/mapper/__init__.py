"""Mapping of network layers onto crossbars: lowering, tiling, bit slicing."""

from .lowering import conv_output_hw, lower_conv, lower_conv_weights
from .pipeline import (
    Backend,
    LayerTrace,
    MappedLayer,
    execute_layer,
    fixed_point_mvm_reference,
)
from .tiling import TilePlan, plan_tiles

__all__ = [
    "Backend",
    "LayerTrace",
    "MappedLayer",
    "TilePlan",
    "conv_output_hw",
    "execute_layer",
    "fixed_point_mvm_reference",
    "lower_conv",
    "lower_conv_weights",
    "plan_tiles",
]
