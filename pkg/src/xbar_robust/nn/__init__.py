"""Network zoo, dual-backend forward, gradients, and checkpointing."""

from .checkpoint import load_checkpoint, save_checkpoint
from .models import MODEL_SPECS, ResNet, build_model, fold_conv_bn
from .ops import (
    AnalogRunner,
    backward_input,
    backward_params,
    forward,
    sgd_step,
)

__all__ = [
    "AnalogRunner",
    "MODEL_SPECS",
    "ResNet",
    "backward_input",
    "backward_params",
    "build_model",
    "fold_conv_bn",
    "forward",
    "load_checkpoint",
    "save_checkpoint",
    "sgd_step",
]
