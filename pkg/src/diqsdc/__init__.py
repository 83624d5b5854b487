"""Device-independent QSDC with heralded single-photon entanglement distribution."""
from .errors import (
    AbortDomainError,
    CapacityError,
    InsufficientDataError,
    NonPurifiableError,
    NoPositiveCapacityError,
    ParameterError,
)
from .params import SystemParams

__all__ = [
    "AbortDomainError",
    "CapacityError",
    "InsufficientDataError",
    "NonPurifiableError",
    "NoPositiveCapacityError",
    "ParameterError",
    "SystemParams",
]
__version__ = "0.1.0"
