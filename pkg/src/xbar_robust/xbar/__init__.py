"""Crossbar transfer-function models: ideal, circuit-level, and learned."""

from .config import (
    XBAR_PRESETS,
    ConductanceMatrix,
    CrossbarConfig,
    ideal_mvm,
    program,
)
from .device import DEVICE_MODELS, DeviceLaw, LinearLaw, Poly3Law, SinhLaw, parse_device_model
from .nf import calibrate_r_wire, compute_nf, nodal_mvm_fn, nodal_nf
from .nodal import CrossbarNetwork, nonideal_mvm_nodal
from .surrogate import (
    SurrogateDataset,
    SurrogateModel,
    fit_surrogate,
    generate_surrogate_dataset,
    surrogate_mvm,
)

__all__ = [
    "CrossbarConfig",
    "ConductanceMatrix",
    "CrossbarNetwork",
    "DEVICE_MODELS",
    "DeviceLaw",
    "LinearLaw",
    "Poly3Law",
    "SinhLaw",
    "SurrogateDataset",
    "SurrogateModel",
    "XBAR_PRESETS",
    "calibrate_r_wire",
    "compute_nf",
    "fit_surrogate",
    "generate_surrogate_dataset",
    "ideal_mvm",
    "nodal_mvm_fn",
    "nodal_nf",
    "nonideal_mvm_nodal",
    "parse_device_model",
    "program",
    "surrogate_mvm",
]
