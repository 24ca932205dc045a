"""Mesoscopic fluctuation dynamics and entanglement witnesses for spin ensembles."""

from . import gaussian_core, mean_field, protocol, spin_chain
from .errors import (
    CapacityError,
    ClosedFormUndefinedError,
    ConvergenceError,
    DimensionError,
    InvalidMeasurementError,
    SingularMeasurementError,
)

__version__ = "0.1.0"

__all__ = [
    "gaussian_core",
    "mean_field",
    "protocol",
    "spin_chain",
    "CapacityError",
    "ClosedFormUndefinedError",
    "ConvergenceError",
    "DimensionError",
    "InvalidMeasurementError",
    "SingularMeasurementError",
]
