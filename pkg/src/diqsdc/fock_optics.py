"""Exact Fock-space simulation of the heralded entanglement-distribution optics.

States are sparse maps from occupation configurations to complex amplitudes.
Linear optical elements act on creation operators, so an element is described
by where each input mode sends its photons; multi-photon terms pick up the
usual sqrt(n!) factors when converting between Fock amplitudes and monomial
coefficients.

Mode paths used by the distribution circuit::

    a, b        source outputs (Alice, Bob)
    a1, b1      VBS transmitted ports, travelling to Charlie
    a2, b2      VBS reflected ports, stored in memory
    b3          Bob's stored mode after the half-wave plate
    D1..D4      Charlie's detectors (D1=c_H, D2=c_V, D3=d_H, D4=d_V)
    env:<path>  loss sinks, never measured
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import ParameterError

H, V = "H", "V"
POLARIZATIONS = (H, V)
DETECTORS = ("D1", "D2", "D3", "D4")
BELL_LABELS = ("phi+", "phi-", "psi+", "psi-")

_PRUNE = 1e-15


class ModeLabel(NamedTuple):
    path: str
    pol: str

    @property
    def party(self) -> str:
        if self.path.startswith("env:"):
            return "environment"
        if self.path.startswith("a"):
            return "Alice"
        if self.path.startswith("b"):
            return "Bob"
        return "Charlie"


Config = tuple  # sorted tuple of (ModeLabel, count)


def _config(modes: Iterable[ModeLabel]) -> Config:
    counts: dict[ModeLabel, int] = defaultdict(int)
    for m in modes:
        counts[m] += 1
    return tuple(sorted(counts.items()))


def _norm_factor(config: Config) -> float:
    return math.sqrt(math.prod(math.factorial(n) for _, n in config))


@dataclass(frozen=True)
class PhotonicState:
    """Immutable sparse Fock-space amplitude map."""

    amplitudes: Mapping[Config, complex] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "amplitudes", MappingProxyType(dict(self.amplitudes)))

    @classmethod
    def from_modes(cls, modes: Iterable[ModeLabel], amplitude: complex = 1.0) -> "PhotonicState":
        return cls({_config(modes): complex(amplitude)})

    @property
    def norm2(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def normalized(self) -> "PhotonicState":
        n = math.sqrt(self.norm2)
        return PhotonicState({k: a / n for k, a in self.amplitudes.items()})

    def photon_numbers(self) -> list[int]:
        return [sum(n for _, n in cfg) for cfg in self.amplitudes]

    def overlap(self, other: "PhotonicState") -> complex:
        return sum(np.conj(a) * other.amplitudes.get(k, 0.0) for k, a in self.amplitudes.items())

    def fidelity(self, other: "PhotonicState") -> float:
        """Squared overlap of the two normalised states."""
        return abs(self.normalized().overlap(other.normalized())) ** 2

    def __add__(self, other: "PhotonicState") -> "PhotonicState":
        out: dict[Config, complex] = defaultdict(complex, self.amplitudes)
        for k, a in other.amplitudes.items():
            out[k] += a
        return PhotonicState(out)

    def scaled(self, c: complex) -> "PhotonicState":
        return PhotonicState({k: c * a for k, a in self.amplitudes.items()})


ModeMap = Mapping[ModeLabel, tuple[tuple[ModeLabel, complex], ...]]


def apply_mode_map(state: PhotonicState, mode_map: ModeMap) -> PhotonicState:
    """Propagate every creation operator through ``mode_map``.

    Modes absent from the map are left untouched.
    """
    out: dict[Config, complex] = defaultdict(complex)
    for cfg, amp in state.amplitudes.items():
        coeff = amp / _norm_factor(cfg)
        photons = [m for m, n in cfg for _ in range(n)]
        branches = [mode_map.get(m, ((m, 1.0),)) for m in photons]
        for combo in itertools.product(*branches):
            w = coeff * math.prod(c for _, c in combo)
            new = _config(m for m, _ in combo)
            out[new] += w * _norm_factor(new)
    return PhotonicState({k: a for k, a in out.items() if abs(a) > _PRUNE})


def drop_modes(state: PhotonicState, paths: set[str]) -> PhotonicState:
    """Keep only branches with no photons in ``paths`` (post-selection, no renormalisation)."""
    return PhotonicState(
        {k: a for k, a in state.amplitudes.items() if not any(m.path in paths for m, _ in k)}
    )


def prepare_sources() -> PhotonicState:
    """|H>_a |V>_a |H>_b |V>_b from four on-demand single-photon sources."""
    return PhotonicState.from_modes(
        [ModeLabel("a", H), ModeLabel("a", V), ModeLabel("b", H), ModeLabel("b", V)]
    )


def _check_unit(name: str, x: float) -> None:
    if not 0.0 <= x <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {x!r}")


def apply_vbs(state: PhotonicState, side: str, T: float) -> PhotonicState:
    """Variable beam splitter on one party's source mode.

    ``side`` is ``"a"`` (Alice) or ``"b"`` (Bob); photons go to ``<side>1``
    with amplitude sqrt(T) and to ``<side>2`` with sqrt(1-T).
    """
    _check_unit("T", T)
    if side not in ("a", "b"):
        raise ParameterError(f"unknown side {side!r}")
    t, r = math.sqrt(T), math.sqrt(1.0 - T)
    mode_map = {
        ModeLabel(side, p): ((ModeLabel(side + "1", p), t), (ModeLabel(side + "2", p), r))
        for p in POLARIZATIONS
    }
    return apply_mode_map(state, mode_map)


def apply_loss(
    state: PhotonicState, modes: Iterable[ModeLabel], eta: float, keep_sinks: bool = False
) -> PhotonicState:
    """Couple each listed mode to an environment sink with amplitude sqrt(1-eta).

    By default branches with photons in a sink are discarded, leaving a
    sub-normalised state whose norm² is the survival probability. With
    ``keep_sinks=True`` the sink modes stay in the (still normalised) state.
    """
    _check_unit("eta", eta)
    keep, lose = math.sqrt(eta), math.sqrt(1.0 - eta)
    mode_map = {
        m: ((m, keep), (ModeLabel("env:" + m.path, m.pol), lose)) for m in modes
    }
    out = apply_mode_map(state, mode_map)
    if keep_sinks:
        return out
    return drop_modes(out, {"env:" + m.path for m in mode_map})


def bell_state(label: str, path_a: str, path_b: str) -> PhotonicState:
    """One photon in each path, polarisations in the named Bell state."""
    s = 1 / math.sqrt(2)
    terms = {
        "phi+": ((H, H, s), (V, V, s)),
        "phi-": ((H, H, s), (V, V, -s)),
        "psi+": ((H, V, s), (V, H, s)),
        "psi-": ((H, V, s), (V, H, -s)),
    }
    if label not in terms:
        raise ParameterError(f"unknown Bell label {label!r}")
    state = PhotonicState()
    for pa, pb, c in terms[label]:
        state = state + PhotonicState.from_modes(
            [ModeLabel(path_a, pa), ModeLabel(path_b, pb)], c
        )
    return state


@dataclass(frozen=True)
class HeraldPattern:
    detector_counts: tuple[tuple[str, int], ...]
    alice_memory: bool = False
    bob_memory: bool = False

    @property
    def clicks(self) -> frozenset[str]:
        return frozenset(d for d, _ in self.detector_counts)

    @property
    def bell_label(self) -> str | None:
        """Linear-optics signature; only psi+/psi- are identifiable."""
        if any(n != 1 for _, n in self.detector_counts):
            return None
        if self.clicks in ({"D1", "D2"}, {"D3", "D4"}):
            return "psi+"
        if self.clicks in ({"D2", "D3"}, {"D1", "D4"}):
            return "psi-"
        return None

    @property
    def accepted(self) -> bool:
        return self.bell_label is not None and self.alice_memory and self.bob_memory


@dataclass(frozen=True)
class HeraldedOutcome:
    pattern: HeraldPattern
    probability: float
    post_state: PhotonicState

    @property
    def bell_label(self) -> str | None:
        return self.pattern.bell_label


def _bsm_mode_map() -> dict[ModeLabel, tuple]:
    # 50:50 BS a1->(c+d)/sqrt2, b1->(c-d)/sqrt2, then PBS: c->D1/D2, d->D3/D4 by H/V
    s = 1 / math.sqrt(2)
    port = {("c", H): "D1", ("c", V): "D2", ("d", H): "D3", ("d", V): "D4"}
    out = {}
    for p in POLARIZATIONS:
        c, d = ModeLabel(port["c", p], p), ModeLabel(port["d", p], p)
        out[ModeLabel("a1", p)] = ((c, s), (d, s))
        out[ModeLabel("b1", p)] = ((c, s), (d, -s))
    return out


def bsm_circuit(state: PhotonicState) -> list[HeraldedOutcome]:
    """Charlie's linear-optics BSM on modes a1/b1 with photon-number-resolving detectors.

    Memory presence in the stored arms (a2, b2/b3) is read out alongside the
    detector pattern. Each outcome carries the normalised conditional state of
    every unmeasured mode (stored arms and loss sinks).
    """
    out = apply_mode_map(state, _bsm_mode_map())
    groups: dict[HeraldPattern, dict[Config, complex]] = defaultdict(dict)
    for cfg, amp in out.amplitudes.items():
        det = tuple((m.path, n) for m, n in cfg if m.path in DETECTORS)
        merged: dict[str, int] = defaultdict(int)
        for d, n in det:
            merged[d] += n
        rest = tuple((m, n) for m, n in cfg if m.path not in DETECTORS)
        pattern = HeraldPattern(
            tuple(sorted(merged.items())),
            alice_memory=any(m.path == "a2" for m, _ in rest),
            bob_memory=any(m.path in ("b2", "b3") for m, _ in rest),
        )
        groups[pattern][rest] = groups[pattern].get(rest, 0) + amp
    outcomes = []
    for pattern, amps in sorted(groups.items(), key=lambda kv: repr(kv[0])):
        sub = PhotonicState(amps)
        prob = sub.norm2
        if prob <= 0:
            continue
        outcomes.append(HeraldedOutcome(pattern, prob, sub.normalized()))
    return outcomes


def apply_hwp(state: PhotonicState, path: str = "b2", new_path: str = "b3") -> PhotonicState:
    """Half-wave plate swapping H and V, relabelling the mode path."""
    return apply_mode_map(
        state,
        {
            ModeLabel(path, H): ((ModeLabel(new_path, V), 1.0),),
            ModeLabel(path, V): ((ModeLabel(new_path, H), 1.0),),
        },
    )


def apply_phase_flip(state: PhotonicState, path: str = "a2") -> PhotonicState:
    return apply_mode_map(state, {ModeLabel(path, V): ((ModeLabel(path, V), -1.0),)})


@dataclass(frozen=True)
class DistributionResult:
    success_probability: float
    post_states: dict[str, PhotonicState]
    accepted: list[HeraldedOutcome]
    outcomes: list[HeraldedOutcome]


def distribute_entanglement(T: float, eta_t_prime: float) -> DistributionResult:
    """Run the full heralded distribution and collect accepted outcomes.

    Accepted post-states have had the HWP applied on Bob's stored photon and,
    for psi- heralds, the phase flip on Alice's, so each should be phi+ on
    (a2, b3).
    """
    _check_unit("T", T)
    _check_unit("eta_t_prime", eta_t_prime)
    state = apply_vbs(apply_vbs(prepare_sources(), "a", T), "b", T)
    travelling = [ModeLabel(x, p) for x in ("a1", "b1") for p in POLARIZATIONS]
    state = apply_loss(state, travelling, eta_t_prime, keep_sinks=True)
    outcomes = bsm_circuit(state)
    accepted = []
    post_states: dict[str, PhotonicState] = {}
    for oc in outcomes:
        if not oc.pattern.accepted:
            continue
        corrected = apply_hwp(oc.post_state)
        if oc.bell_label == "psi-":
            corrected = apply_phase_flip(corrected)
        oc = HeraldedOutcome(oc.pattern, oc.probability, corrected)
        accepted.append(oc)
        post_states.setdefault(oc.bell_label, corrected)
    return DistributionResult(
        success_probability=float(sum(o.probability for o in accepted)),
        post_states=post_states,
        accepted=accepted,
        outcomes=outcomes,
    )


# --- two-qubit polarisation correlations (|H>=|0>, |V>=|1>) ---

_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


def bell_density(label: str) -> np.ndarray:
    s = 1 / math.sqrt(2)
    vecs = {
        "phi+": [s, 0, 0, s],
        "phi-": [s, 0, 0, -s],
        "psi+": [0, s, s, 0],
        "psi-": [0, s, -s, 0],
    }
    if label not in vecs:
        raise ParameterError(f"unknown Bell label {label!r}")
    v = np.array(vecs[label], dtype=complex)
    return np.outer(v, v.conj())


def observable(theta: float) -> np.ndarray:
    """cos(theta) sigma_z + sin(theta) sigma_x."""
    return math.cos(theta) * _SZ + math.sin(theta) * _SX


def correlator(rho: np.ndarray, angle_a: float, angle_b: float) -> float:
    return float(np.real(np.trace(rho @ np.kron(observable(angle_a), observable(angle_b)))))


def correlation_oracle(bell_label: str, angle_a: float, angle_b: float) -> float:
    """<sigma(a) x sigma(b)> for a Bell state by explicit trace."""
    return correlator(bell_density(bell_label), angle_a, angle_b)


def measure_resend(rho: np.ndarray, basis_angle: float, qubit: int = 0) -> np.ndarray:
    """Projective measurement of one qubit along ``basis_angle``, result re-prepared.

    Returns the unconditional post-measurement state.
    """
    obs = observable(basis_angle)
    out = np.zeros_like(rho)
    for sign in (1, -1):
        proj = (_I2 + sign * obs) / 2
        full = np.kron(proj, _I2) if qubit == 0 else np.kron(_I2, proj)
        out += full @ rho @ full
    return out


# Alice: A0..A3, Bob: B1, B2 as angles in the Z-X plane
ALICE_ANGLES = (0.0, math.pi / 4, -math.pi / 4, math.pi / 2)
BOB_ANGLES = (0.0, math.pi / 2)


def chsh_value(rho: np.ndarray) -> float:
    a1, a2 = ALICE_ANGLES[1], ALICE_ANGLES[2]
    b1, b2 = BOB_ANGLES
    return (
        correlator(rho, a1, b1)
        + correlator(rho, a1, b2)
        + correlator(rho, a2, b1)
        - correlator(rho, a2, b2)
    )
