"""Synthetic radio-signal simulation, spectrogram features, drift detection,
and a from-scratch wide-residual-network classifier."""

__version__ = "0.1.0"

from sigspec.errors import (
    DataError,
    InvalidParameterError,
    NumericError,
    ShapeError,
    SigspecError,
)

__all__ = [
    "DataError",
    "InvalidParameterError",
    "NumericError",
    "ShapeError",
    "SigspecError",
    "__version__",
]
