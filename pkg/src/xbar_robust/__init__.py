"""Simulation of DNN inference on non-ideal resistive crossbar hardware.

Subpackages cover fixed-point bit slicing (``fxp``), crossbar transfer
models (``xbar``), layer-to-crossbar mapping (``mapper``), the network
zoo and training ops (``nn``), PGD attacks and adversarial training
(``adv``), noise/robustness metrics (``metrics``), and the experiment
harness (``harness``).
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    IngestionError,
    MappingError,
    NumericalError,
    TrainingError,
    UnsupportedBackendError,
)

__all__ = [
    "ConfigError",
    "IngestionError",
    "MappingError",
    "NumericalError",
    "TrainingError",
    "UnsupportedBackendError",
    "__version__",
]
