"""Transient throughput bounds and simulation for multi-hop wireless networks."""

__version__ = "0.1.0"

from ._core import BACKEND  # noqa: E402
from .errors import (  # noqa: E402
    CapacityError, ConnectivityError, HorizonError, ModelError, NumericError,
    ParameterError, TranscapError,
)

__all__ = [
    "BACKEND", "CapacityError", "ConnectivityError", "HorizonError", "ModelError",
    "NumericError", "ParameterError", "TranscapError", "__version__",
]
