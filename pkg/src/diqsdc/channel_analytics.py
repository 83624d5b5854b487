"""Closed-form security and capacity model.

Everything here is a pure function of :class:`~diqsdc.params.SystemParams`.
The comparison protocol (entangled-source distribution over the whole link,
no heralding) uses a reconstructed model: the distribution round sees
``eta_t`` once and the total loss sees ``eta_t**2``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import bisect

from .errors import (
    AbortDomainError,
    NoPositiveCapacityError,
    NonPurifiableError,
    ParameterError,
)
from .params import SystemParams

S_MAX = 2.0 * math.sqrt(2.0)
CLASSICAL_BOUND = 2.0
UNBOUNDED = math.inf
LOG_FLOOR = -math.inf


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ParameterError(f"binary entropy argument must lie in [0, 1], got {x!r}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def eta_transmission(L_km: float, alpha: float = 0.2) -> float:
    """Fibre transmittance 10^(-alpha L / 10)."""
    if L_km < 0:
        raise ParameterError(f"distance must be non-negative, got {L_km!r}")
    return 10.0 ** (-alpha * L_km / 10.0)


def heralding_probability(eta_t: float, T: float) -> float:
    """Closed-form heralding probability eta_t T^2 (1-T)^2.

    Note: the exact optics in :mod:`diqsdc.fock_optics` give twice this value.
    The closed form is kept as the model's P1 so that efficiency ratios stay
    comparable with the published curves.
    """
    return eta_t * T**2 * (1.0 - T) ** 2


@dataclass(frozen=True)
class RoundMetrics:
    S: float
    Q_sum: float


def round1_metrics(eta_l: float, F: float) -> RoundMetrics:
    return RoundMetrics(S=S_MAX * eta_l**2 * F, Q_sum=0.5 - eta_l**2 * (F - 0.5))


def round2_metrics(eta_t: float, eta_l: float, F: float) -> RoundMetrics:
    return RoundMetrics(
        S=S_MAX * eta_t * eta_l**2 * F**2,
        Q_sum=0.5 - eta_t * eta_l**2 * (F**2 - 0.5),
    )


def holevo_bound(S: float) -> float:
    """Upper bound on Eve's Holevo information given a CHSH value ``S``."""
    if S <= CLASSICAL_BOUND:
        raise AbortDomainError(f"S={S!r} does not violate the CHSH inequality")
    if S > S_MAX + 1e-9:
        raise ParameterError(f"S={S!r} exceeds the Tsirelson bound")
    S = min(S, S_MAX)
    return binary_entropy((1.0 + math.sqrt(max((S / 2.0) ** 2 - 1.0, 0.0))) / 2.0)


def _clip_unit(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def _raw_capacity(params: SystemParams) -> float:
    """Unclamped 1 - H(Qt) - chi(S1); -1 when S1 does not violate CHSH."""
    r1 = round1_metrics(params.eta_l, params.F)
    if r1.S <= CLASSICAL_BOUND:
        return -1.0
    qt = _clip_unit(round2_metrics(params.eta_t, params.eta_l, params.F).Q_sum)
    return 1.0 - binary_entropy(qt) - holevo_bound(r1.S)


def original_metrics(params: SystemParams) -> tuple[RoundMetrics, float]:
    """(S1, Qt) and r_loss for the entangled-source comparison protocol."""
    eta_t, eta_l, F = params.eta_t, params.eta_l, params.F
    metrics = RoundMetrics(
        S=S_MAX * eta_t * eta_l**2 * F,
        Q_sum=0.5 - eta_t**2 * eta_l**2 * (F**2 - 0.5),
    )
    return metrics, 1.0 - eta_l**2 * eta_t**2


def _raw_capacity_original(params: SystemParams) -> float:
    m, _ = original_metrics(params)
    if m.S <= CLASSICAL_BOUND:
        return -1.0
    return 1.0 - binary_entropy(_clip_unit(m.Q_sum)) - holevo_bound(m.S)


def secrecy_capacity_original(params: SystemParams) -> float:
    return max(0.0, _raw_capacity_original(params))


def practical_efficiency(params: SystemParams) -> tuple[float, float]:
    """Secure qubits per second for the heralded protocol and the comparison one.

    A quarter of the pairs carry messages (half checked in each round). The
    comparison protocol's rate includes the SPDC pair probability ``p``.
    """
    cs = max(0.0, _raw_capacity(params))
    cs0 = secrecy_capacity_original(params)
    p1 = heralding_probability(params.eta_t, params.T)
    return 0.25 * params.R_rep * p1 * cs, 0.25 * params.R_rep * params.p * cs0


@dataclass(frozen=True)
class CapacityReport:
    S1: float
    S2: float
    Qt: float
    chi_S1: float
    chi_S2: float
    I_AB: float
    Cs: float
    Cs0: float
    r_loss: float
    r_error: float
    r_loss0: float
    Es: float
    Es0: float
    aborted: bool

    def as_dict(self) -> dict:
        return asdict(self)


def secrecy_capacity(params: SystemParams) -> CapacityReport:
    """Devetak-Winter style lower bound 1 - H(Qt) - chi(S1) plus bookkeeping.

    ``aborted`` is set when either round's CHSH value fails to exceed 2. The
    capacity itself is zeroed only for a round-1 failure, since the leakage
    bound involves S1 alone; ``chi_S2`` is informational and NaN when S2 <= 2.
    """
    eta_t, eta_l, F = params.eta_t, params.eta_l, params.F
    r1 = round1_metrics(eta_l, F)
    r2 = round2_metrics(eta_t, eta_l, F)
    qt = _clip_unit(r2.Q_sum)
    i_ab = 1.0 - binary_entropy(qt)
    if r1.S > CLASSICAL_BOUND:
        chi1 = holevo_bound(r1.S)
        cs = max(0.0, i_ab - chi1)
    else:
        chi1, cs = 1.0, 0.0
    chi2 = holevo_bound(r2.S) if r2.S > CLASSICAL_BOUND else math.nan
    es, es0 = practical_efficiency(params)
    _, r_loss0 = original_metrics(params)
    return CapacityReport(
        S1=r1.S,
        S2=r2.S,
        Qt=qt,
        chi_S1=chi1,
        chi_S2=chi2,
        I_AB=i_ab,
        Cs=cs,
        Cs0=secrecy_capacity_original(params),
        r_loss=1.0 - eta_l**2 * eta_t,
        r_error=1.0 - F**2,
        r_loss0=r_loss0,
        Es=es,
        Es0=es0,
        aborted=r1.S <= CLASSICAL_BOUND or r2.S <= CLASSICAL_BOUND,
    )


def max_distance(params: SystemParams, which: str = "current", tol_km: float = 1e-3) -> float:
    """Distance at which the capacity reaches zero, by bisection.

    Returns :data:`UNBOUNDED` (``math.inf``) for the heralded protocol when
    chi(S1) = 0 and F^2 > 1/2: then Qt < 1/2 at every finite distance.
    """
    if which == "current":
        raw = _raw_capacity
    elif which == "original":
        raw = _raw_capacity_original
    else:
        raise ParameterError(f"unknown protocol variant {which!r}")
    at = lambda L: raw(params.replace(L_AB=L))  # noqa: E731
    if at(0.0) <= 0:
        raise NoPositiveCapacityError(f"no positive {which} capacity at L=0")
    if which == "current":
        s1 = round1_metrics(params.eta_l, params.F).S
        if holevo_bound(s1) == 0.0 and params.F**2 > 0.5 and params.eta_l > 0:
            return UNBOUNDED
    hi = 1.0
    while at(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            return UNBOUNDED
    return bisect(at, 0.0, hi, xtol=tol_km)


# --- purification ---

Recurrence = Callable[[float], tuple[float, float]]


def purification_round(F: float) -> tuple[float, float]:
    """One two-pair recurrence step on a Werner state: (F_next, success probability)."""
    if not 0.5 < F <= 1.0:
        raise NonPurifiableError(f"recurrence needs F in (0.5, 1], got {F!r}")
    e = (1.0 - F) / 3.0
    d = F**2 + 2.0 * F * e + 5.0 * e**2
    return (F**2 + e**2) / d, d


@dataclass(frozen=True)
class PurificationPlan:
    rounds: int
    per_round: list[tuple[float, float]] = field(default_factory=list)
    F_final: float = 1.0
    Qt_prime: float = 0.5
    chi_S1: float = 1.0
    Cs_prime: float = 0.0
    Esm: float = 0.0


def purified_capacity(
    params: SystemParams, n_rounds: int, recurrence: Recurrence = purification_round
) -> PurificationPlan:
    """Apply ``n_rounds`` of purification after distribution and re-evaluate the link.

    ``per_round`` lists (F_i, P_EP_i) after each round. Esm carries the factor
    prod(P_EP_i) / 2^N for pairs consumed and the information term 1 - H(Qt').
    """
    if n_rounds < 0 or int(n_rounds) != n_rounds:
        raise ParameterError(f"n_rounds must be a non-negative integer, got {n_rounds!r}")
    F = params.F
    per_round = []
    yield_factor = 1.0
    for _ in range(int(n_rounds)):
        F, p_ep = recurrence(F)
        per_round.append((F, p_ep))
        yield_factor *= p_ep / 2.0
    eta_t, eta_l = params.eta_t, params.eta_l
    qt = _clip_unit(0.5 - eta_t * eta_l**2 * (F - 0.5))
    s1 = round1_metrics(eta_l, F).S
    chi = holevo_bound(s1) if s1 > CLASSICAL_BOUND else 1.0
    info = 1.0 - binary_entropy(qt)
    p1 = heralding_probability(eta_t, params.T)
    return PurificationPlan(
        rounds=int(n_rounds),
        per_round=per_round,
        F_final=F,
        Qt_prime=qt,
        chi_S1=chi,
        Cs_prime=max(0.0, info - chi) if s1 > CLASSICAL_BOUND else 0.0,
        Esm=0.25 * params.R_rep * p1 * yield_factor * info,
    )


# --- distance sweeps ---

CURVE_COLUMNS = ("L_km", "Cs", "Cs0", "Es", "Es0", "log10Es", "log10Es0", "S1", "S2", "Qt")


def _log10(x: float) -> float:
    return math.log10(x) if x > 0 else LOG_FLOOR


def distance_grid(L_min: float, L_max: float, step: float) -> np.ndarray:
    if step <= 0:
        raise ParameterError(f"step must be positive, got {step!r}")
    if L_min > L_max:
        raise ParameterError("L_min must not exceed L_max")
    if L_min < 0:
        raise ParameterError("distances must be non-negative")
    n = int(math.floor((L_max - L_min) / step + 1e-9)) + 1
    # round away accumulated binary error so grid points print cleanly
    return np.round(L_min + step * np.arange(n), 12)


def sweep_curves(
    params: SystemParams, L_min: float = 0.01, L_max: float = 8.0, step: float = 0.01
) -> list[dict[str, float]]:
    rows = []
    for L in distance_grid(L_min, L_max, step):
        rep = secrecy_capacity(params.replace(L_AB=float(L)))
        rows.append(
            {
                "L_km": float(L),
                "Cs": rep.Cs,
                "Cs0": rep.Cs0,
                "Es": rep.Es,
                "Es0": rep.Es0,
                "log10Es": _log10(rep.Es),
                "log10Es0": _log10(rep.Es0),
                "S1": rep.S1,
                "S2": rep.S2,
                "Qt": rep.Qt,
            }
        )
    return rows
