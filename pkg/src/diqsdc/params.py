"""Physical parameters shared by the analytic model and the simulator."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ParameterError


def _check_unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class SystemParams:
    """Link, device and source parameters.

    ``eta_c``, ``eta_m`` and ``eta_d`` multiply into the local efficiency
    ``eta_l``. Charlie sits at the midpoint, so the half-link efficiency
    squared is the full-link efficiency ``eta_t``.
    """

    F: float = 0.98
    eta_c: float = 1.0
    eta_m: float = 0.98
    eta_d: float = 1.0
    T: float = 0.5
    alpha: float = 0.2  # dB/km
    L_AB: float = 1.0  # km
    R_rep: float = 1e7  # Hz
    p: float = 1e-4
    N: int = 1_000_000

    def __post_init__(self) -> None:
        for name in ("F", "eta_c", "eta_m", "eta_d", "T", "p"):
            _check_unit(name, getattr(self, name))
        if not self.F >= 0.25:
            raise ParameterError(f"F must be >= 0.25, got {self.F!r}")
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha!r}")
        if not self.L_AB >= 0:
            raise ParameterError(f"L_AB must be non-negative, got {self.L_AB!r}")
        if not self.R_rep > 0:
            raise ParameterError(f"R_rep must be positive, got {self.R_rep!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ParameterError(f"N must be a positive integer, got {self.N!r}")

    @property
    def eta_l(self) -> float:
        return self.eta_c * self.eta_m * self.eta_d

    @property
    def eta_t(self) -> float:
        return 10.0 ** (-self.alpha * self.L_AB / 10.0)

    @property
    def eta_t_prime(self) -> float:
        return 10.0 ** (-self.alpha * self.L_AB / 20.0)

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    @classmethod
    def with_local_efficiency(cls, eta_l: float, **kwargs) -> "SystemParams":
        """Build params whose whole local efficiency sits in the memory term."""
        return cls(eta_c=1.0, eta_m=eta_l, eta_d=1.0, **kwargs)
