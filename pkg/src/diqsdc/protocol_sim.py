"""Monte Carlo execution of the five-step protocol.

Pairs are simulated as a struct-of-arrays :class:`PairTable`. All per-pair
randomness is drawn up front from counter-based (Philox) substreams, one per
block of pulses, so the result does not depend on how blocks are distributed
over workers. Only the shuffle permutation, Eve's round-2 targeting and the
random message come from dedicated global substreams.

Noise follows the closed-form model: a corrupted pair gives uncorrelated
check outcomes but a deterministically wrong message bit; a lost arm gives a
fair coin. Eve's intercept-resend changes the pair's correlator (computed from
density matrices) and randomises the decoded bit.
"""
from __future__ import annotations

import dataclasses
import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import channel_analytics as ca
from .errors import CapacityError, InsufficientDataError, ParameterError
from .fock_optics import ALICE_ANGLES, BOB_ANGLES, bell_density, correlator, measure_resend
from .params import SystemParams

BLOCK_SIZE = 1 << 16

CHECK1, MESSAGE, CHECK2 = 0, 1, 2
ROLE_NAMES = {CHECK1: "check1", MESSAGE: "message", CHECK2: "check2"}

# substream keys below the block range
_STREAM_SHUFFLE, _STREAM_EVE, _STREAM_MESSAGE = 0, 1, 2
_BLOCK_OFFSET = 16


def _substream(seed: int, key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(key),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class EveModel:
    """Intercept-resend on a fraction of pairs in each round.

    ``round1_fraction`` of heralded pairs are attacked during distribution.
    In round 2 Eve attacks ``round2_fraction`` of transmitted positions,
    aiming at the positions of her round-1 victims first.
    """

    round1_fraction: float = 0.0
    round2_fraction: float = 0.0
    basis_strategy: str = "fixed-Z"

    def __post_init__(self) -> None:
        for name in ("round1_fraction", "round2_fraction"):
            x = getattr(self, name)
            if not 0.0 <= x <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {x!r}")
        if self.basis_strategy not in ("fixed-Z", "random-ZX"):
            raise ParameterError(f"unknown basis strategy {self.basis_strategy!r}")

    @property
    def active(self) -> bool:
        return self.round1_fraction > 0 or self.round2_fraction > 0


NO_EVE = EveModel()


def _attack(rho: np.ndarray, strategy: str) -> np.ndarray:
    if strategy == "fixed-Z":
        return measure_resend(rho, 0.0)
    return 0.5 * (measure_resend(rho, 0.0) + measure_resend(rho, math.pi / 2))


def correlator_table(eve: EveModel) -> np.ndarray:
    """Correlators E[state, basis_a, basis_b] for phi+ under Eve's touches.

    ``state`` = touched_r1 + 2 * touched_r2.
    """
    return _correlator_table(eve).copy()


@functools.lru_cache(maxsize=16)
def _correlator_table(eve: EveModel) -> np.ndarray:
    table = np.empty((4, len(ALICE_ANGLES), len(BOB_ANGLES)))
    for state in range(4):
        rho = bell_density("phi+")
        if state & 1:
            rho = _attack(rho, eve.basis_strategy)
        if state & 2:
            rho = _attack(rho, eve.basis_strategy)
        for i, a in enumerate(ALICE_ANGLES):
            for j, b in enumerate(BOB_ANGLES):
                table[state, i, j] = correlator(rho, a, b)
    return table


@dataclass(frozen=True)
class ProtocolConfig:
    params: SystemParams = field(default_factory=SystemParams)
    seed: int = 0
    check_fraction: float = 0.5
    eve: EveModel = NO_EVE
    message_bits: Sequence[int] | None = None
    shuffle: bool = True
    workers: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.check_fraction < 1.0:
            raise ParameterError(f"check_fraction must lie in (0, 1), got {self.check_fraction!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        if self.message_bits is not None and any(b not in (0, 1) for b in self.message_bits):
            raise ParameterError("message bits must be 0 or 1")


@dataclass(frozen=True)
class PairRecord:
    id: int
    heralded: bool
    role: str
    corrupted_r1: bool
    corrupted_r2: bool
    present_A: bool
    present_B: bool
    survived_r2: bool
    encoded_bit: int | None
    shuffled_position: int | None
    eve_touched_r1: bool
    eve_touched_r2: bool


@dataclass(frozen=True)
class PairTable:
    """Per-pair state of every heralded pair, in pulse order."""

    pulse_id: np.ndarray
    role: np.ndarray
    corrupted_r1: np.ndarray
    eve_touched_r1: np.ndarray
    basis_a: np.ndarray
    basis_b: np.ndarray
    u_present_a: np.ndarray
    u_present_b: np.ndarray
    u_survive: np.ndarray
    u_corrupt2: np.ndarray
    u_a: np.ndarray
    u_b: np.ndarray
    u_err: np.ndarray
    corrupted_r2: np.ndarray = None
    eve_touched_r2: np.ndarray = None
    survived_r2: np.ndarray = None
    present_a: np.ndarray = None
    present_b: np.ndarray = None
    encoded_bit: np.ndarray = None
    shuffled_position: np.ndarray = None

    def __post_init__(self) -> None:
        n = len(self.pulse_id)
        for name, default in (
            ("corrupted_r2", False),
            ("eve_touched_r2", False),
            ("survived_r2", False),
            ("present_a", False),
            ("present_b", False),
        ):
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.full(n, default))
        if self.encoded_bit is None:
            object.__setattr__(self, "encoded_bit", np.full(n, -1, dtype=np.int8))
        if self.shuffled_position is None:
            object.__setattr__(self, "shuffled_position", np.full(n, -1, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.pulse_id)

    def replace(self, **changes) -> "PairTable":
        return dataclasses.replace(self, **changes)

    def select(self, mask: np.ndarray) -> "PairTable":
        return PairTable(**{f.name: getattr(self, f.name)[mask] for f in dataclasses.fields(self)})

    @classmethod
    def concat(cls, tables: Sequence["PairTable"]) -> "PairTable":
        return cls(
            **{
                f.name: np.concatenate([getattr(t, f.name) for t in tables])
                for f in dataclasses.fields(cls)
            }
        )

    def record(self, i: int) -> PairRecord:
        bit = int(self.encoded_bit[i])
        pos = int(self.shuffled_position[i])
        return PairRecord(
            id=int(self.pulse_id[i]),
            heralded=True,
            role=ROLE_NAMES[int(self.role[i])],
            corrupted_r1=bool(self.corrupted_r1[i]),
            corrupted_r2=bool(self.corrupted_r2[i]),
            present_A=bool(self.present_a[i]),
            present_B=bool(self.present_b[i]),
            survived_r2=bool(self.survived_r2[i]),
            encoded_bit=None if bit < 0 else bit,
            shuffled_position=None if pos < 0 else pos,
            eve_touched_r1=bool(self.eve_touched_r1[i]),
            eve_touched_r2=bool(self.eve_touched_r2[i]),
        )


def sample_heralding(params: SystemParams, rng: np.random.Generator, size: int | None = None):
    """Bernoulli draw(s) of a successful heralded distribution."""
    p1 = ca.heralding_probability(params.eta_t, params.T)
    if size is None:
        return bool(rng.random() < p1)
    return rng.random(size) < p1


def _simulate_block(
    params: SystemParams, eve: EveModel, check_fraction: float, seed: int, block: int
) -> PairTable:
    rng = _substream(seed, _BLOCK_OFFSET + block)
    start = block * BLOCK_SIZE
    n = min(BLOCK_SIZE, params.N - start)
    heralded = sample_heralding(params, rng, n)
    ids = start + np.flatnonzero(heralded)
    h = len(ids)
    # fixed draw order; changing it changes every seeded result
    u_role = rng.random(h)
    u_corrupt1 = rng.random(h)
    u_eve1 = rng.random(h)
    basis_a = rng.integers(0, len(ALICE_ANGLES), h, dtype=np.int8)
    basis_b = rng.integers(0, len(BOB_ANGLES), h, dtype=np.int8)
    u = rng.random((7, h))
    cf = check_fraction
    role = np.where(
        u_role < cf, CHECK1, np.where(u_role < cf + (1 - cf) * cf, CHECK2, MESSAGE)
    ).astype(np.int8)
    return PairTable(
        pulse_id=ids.astype(np.int64),
        role=role,
        corrupted_r1=u_corrupt1 < 1.0 - params.F,
        eve_touched_r1=u_eve1 < eve.round1_fraction,
        basis_a=basis_a,
        basis_b=basis_b,
        u_present_a=u[0],
        u_present_b=u[1],
        u_survive=u[2],
        u_corrupt2=u[3],
        u_a=u[4],
        u_b=u[5],
        u_err=u[6],
    )


def distribute_pairs(config: ProtocolConfig) -> PairTable:
    """Step 1: heralded distribution over all pulses, block-parallel."""
    p = config.params
    n_blocks = -(-p.N // BLOCK_SIZE)
    args = [(p, config.eve, config.check_fraction, config.seed, k) for k in range(n_blocks)]
    if config.workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            tables = list(pool.map(lambda a: _simulate_block(*a), args))
    else:
        tables = [_simulate_block(*a) for a in args]
    return PairTable.concat(tables)


def _outcomes(
    basis_a: np.ndarray,
    basis_b: np.ndarray,
    both_present: np.ndarray,
    correlated: np.ndarray,
    E: np.ndarray,
    u_a: np.ndarray,
    u_b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """+-1 outcomes with uniform marginals; correlator E where both arms are live."""
    a = np.where(u_a < 0.5, 1, -1).astype(np.int8)
    live = both_present & correlated
    same = u_b < (1.0 + E) / 2.0
    b_live = np.where(same, a, -a)
    b_free = np.where(u_b < 0.5, 1, -1)
    b = np.where(live, b_live, b_free).astype(np.int8)
    return a, b


def sample_check_outcome(
    pair: PairRecord,
    basis_a: int,
    basis_b: int,
    round: int,
    rng: np.random.Generator,
    params: SystemParams | None = None,
    eve: EveModel = NO_EVE,
) -> tuple[int, int]:
    """Outcome pair for one checking pair measured in (A_basis_a, B_basis_b).

    Presence is sampled here: eta_l per arm in round 1; in round 2 Alice's arm
    additionally needs the channel survival recorded on ``pair``.
    """
    params = params or SystemParams()
    eta_l = params.eta_l
    pa = rng.random() < eta_l
    pb = rng.random() < eta_l
    if round == 2:
        pa = pa and pair.survived_r2
    elif round != 1:
        raise ParameterError(f"round must be 1 or 2, got {round!r}")
    corrupted = pair.corrupted_r1 or (round == 2 and pair.corrupted_r2)
    state = int(pair.eve_touched_r1) + 2 * int(round == 2 and pair.eve_touched_r2)
    E = _correlator_table(eve)[state, basis_a, basis_b]
    a, b = _outcomes(
        np.array([basis_a]),
        np.array([basis_b]),
        np.array([pa and pb]),
        np.array([not corrupted]),
        np.array([E]),
        rng.random(1),
        rng.random(1),
    )
    return int(a[0]), int(b[0])


@dataclass(frozen=True)
class SecurityCheckStats:
    """Outcome tallies of one security-check round.

    ``tallies[i, j, x, y]`` counts basis A_i, B_(j+1), with x/y = 0 for +1 and
    1 for -1. ``error_events`` / ``n_checks`` is the combined error estimator.
    """

    tallies: np.ndarray
    error_events: int
    n_checks: int

    @property
    def n_discarded(self) -> int:
        return int(self.tallies[0, 1].sum() + self.tallies[3, 0].sum())

    def cell(self, i: int, j: int) -> tuple[int, float]:
        t = self.tallies[i, j]
        n = int(t.sum())
        if n == 0:
            raise InsufficientDataError(f"no samples in cell A{i}B{j + 1}")
        return n, float(t[0, 0] + t[1, 1] - t[0, 1] - t[1, 0]) / n

    @property
    def S_hat(self) -> float:
        return estimate_chsh(self)[0]

    def as_dict(self) -> dict:
        out = {"n_checks": self.n_checks, "n_discarded": self.n_discarded}
        try:
            s, s_se = estimate_chsh(self)
            out.update(S_hat=s, S_se=s_se)
        except InsufficientDataError:
            out.update(S_hat=None, S_se=None)
        try:
            (qb, qp, qs), (qb_se, qp_se, qs_se) = estimate_error_rates(self, with_errors=True)
            out.update(Qb_hat=qb, Qp_hat=qp, Q_sum_hat=qs, Qb_se=qb_se, Qp_se=qp_se, Q_sum_se=qs_se)
        except InsufficientDataError:
            out.update(Qb_hat=None, Qp_hat=None, Q_sum_hat=None)
        out["tallies"] = self.tallies.tolist()
        return out


def tally(
    basis_a: np.ndarray, basis_b: np.ndarray, a: np.ndarray, b: np.ndarray, errors: np.ndarray
) -> SecurityCheckStats:
    t = np.zeros((len(ALICE_ANGLES), len(BOB_ANGLES), 2, 2), dtype=np.int64)
    np.add.at(t, (basis_a, basis_b, (a < 0).astype(int), (b < 0).astype(int)), 1)
    return SecurityCheckStats(t, int(errors.sum()), int(len(errors)))


def estimate_chsh(stats: SecurityCheckStats) -> tuple[float, float]:
    """CHSH estimate from the (A1, A2) x (B1, B2) cells and its standard error."""
    s, var = 0.0, 0.0
    for i, j, sign in ((1, 0, 1), (1, 1, 1), (2, 0, 1), (2, 1, -1)):
        n, e = stats.cell(i, j)
        s += sign * e
        var += (1.0 - e * e) / n
    return s, math.sqrt(var)


def estimate_error_rates(stats: SecurityCheckStats, round: int = 1, with_errors: bool = False):
    """(Qb, Qp, Q_sum) from the A0B1 and A3B2 cells and the error-event tally.

    ``round`` is accepted for symmetry with the protocol steps; both rounds
    share one estimator.
    """
    nb, eb = stats.cell(0, 0)
    np_, ep = stats.cell(3, 1)
    if stats.n_checks == 0:
        raise InsufficientDataError("no checking pairs")
    qb, qp = (1.0 - eb) / 2.0, (1.0 - ep) / 2.0
    qs = stats.error_events / stats.n_checks
    rates = (qb, qp, qs)
    if not with_errors:
        return rates
    ses = tuple(
        math.sqrt(q * (1.0 - q) / n) for q, n in ((qb, nb), (qp, np_), (qs, stats.n_checks))
    )
    return rates, ses


def _check_round(
    pairs: PairTable, mask: np.ndarray, round: int, params: SystemParams, table: np.ndarray
) -> tuple[SecurityCheckStats, np.ndarray, np.ndarray]:
    sub = pairs.select(mask)
    eta_l = params.eta_l
    present_a = sub.u_present_a < eta_l
    present_b = sub.u_present_b < eta_l
    corrupted = sub.corrupted_r1.copy()
    state = sub.eve_touched_r1.astype(int)
    if round == 2:
        present_a &= sub.survived_r2
        corrupted |= sub.corrupted_r2
        state = state + 2 * sub.eve_touched_r2.astype(int)
    both = present_a & present_b
    E = table[state, sub.basis_a, sub.basis_b]
    a, b = _outcomes(sub.basis_a, sub.basis_b, both, ~corrupted, E, sub.u_a, sub.u_b)
    coin = sub.u_err < 0.5
    disturbed = state > 0
    errors = np.where(both, corrupted | (disturbed & coin), coin)
    keep = ~(
        ((sub.basis_a == 0) & (sub.basis_b == 1)) | ((sub.basis_a == 3) & (sub.basis_b == 0))
    )
    # A0B2 / A3B1 are tallied for the record but never reach an estimator
    stats = tally(sub.basis_a, sub.basis_b, a, b, errors[keep])
    return stats, present_a, present_b


@dataclass(frozen=True)
class Permutation:
    """Transmission order: position j carries sent pair ``order[j]``."""

    sent_index: np.ndarray  # PairTable rows of the sent pairs, original order
    order: np.ndarray

    @property
    def position_of(self) -> np.ndarray:
        inv = np.empty_like(self.order)
        inv[self.order] = np.arange(len(self.order))
        return inv


def encode_and_shuffle(
    pairs: PairTable,
    message_bits: Sequence[int] | None,
    rng: np.random.Generator,
    shuffle: bool = True,
    message_rng: np.random.Generator | None = None,
) -> tuple[PairTable, Permutation]:
    """Encode bits on message pairs and shuffle everything Alice sends.

    Bit 0 applies sigma_x (phi+ -> psi+), bit 1 applies i sigma_y (phi+ -> psi-).
    Message pairs beyond ``len(message_bits)`` carry random padding bits.
    """
    msg_rows = np.flatnonzero(pairs.role == MESSAGE)
    n_msg = len(msg_rows)
    if message_bits is None:
        bits = np.zeros(0, dtype=np.int8)
    else:
        bits = np.asarray(message_bits, dtype=np.int8)
    if len(bits) > n_msg:
        raise CapacityError(f"{len(bits)} message bits but only {n_msg} message pairs")
    pad_rng = message_rng if message_rng is not None else rng
    pad = pad_rng.integers(0, 2, n_msg - len(bits), dtype=np.int8)
    encoded = pairs.encoded_bit.copy()
    encoded[msg_rows] = np.concatenate([bits, pad])
    sent = np.flatnonzero(pairs.role != CHECK1)
    order = rng.permutation(len(sent)) if shuffle else np.arange(len(sent))
    perm = Permutation(sent_index=sent, order=order)
    positions = pairs.shuffled_position.copy()
    positions[sent] = perm.position_of
    return pairs.replace(encoded_bit=encoded, shuffled_position=positions), perm


def _eve_round2_positions(
    pairs: PairTable, perm: Permutation, eve: EveModel, rng: np.random.Generator
) -> np.ndarray:
    n = len(perm.order)
    target = int(round(eve.round2_fraction * n))
    if target == 0:
        return np.zeros(n, dtype=bool)
    # Eve assumes the sequence order is unchanged and aims at her round-1 victims
    aimed = np.flatnonzero(pairs.eve_touched_r1[perm.sent_index])
    if len(aimed) >= target:
        chosen = rng.choice(aimed, size=target, replace=False)
    else:
        others = np.setdiff1d(np.arange(n), aimed, assume_unique=True)
        chosen = np.concatenate([aimed, rng.choice(others, size=target - len(aimed), replace=False)])
    hit = np.zeros(n, dtype=bool)
    hit[chosen] = True
    return hit


def transmit_round2(
    pairs: PairTable,
    params: SystemParams,
    eve: EveModel,
    rng: np.random.Generator,
    perm: Permutation,
) -> PairTable:
    """Alice's photons travel to Bob in shuffled order.

    Channel survival uses eta_t, a second decoherence hits with probability
    1 - F, and Eve attacks positions chosen by :func:`_eve_round2_positions`.
    """
    sent = perm.sent_index
    survived = np.zeros(len(pairs), dtype=bool)
    corrupted2 = np.zeros(len(pairs), dtype=bool)
    survived[sent] = pairs.u_survive[sent] < params.eta_t
    corrupted2[sent] = pairs.u_corrupt2[sent] < 1.0 - params.F
    touched2 = np.zeros(len(pairs), dtype=bool)
    if eve.round2_fraction > 0:
        hit_by_position = _eve_round2_positions(pairs, perm, eve, rng)
        touched2[sent[perm.order]] = hit_by_position
    return pairs.replace(survived_r2=survived, corrupted_r2=corrupted2, eve_touched_r2=touched2)


@dataclass(frozen=True)
class DecodeResult:
    bit: int | None
    lost: bool
    error: bool


def decode_all(pairs: PairTable, eta_l: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised BSM readout of every message pair.

    Returns (rows, lost, decoded_bit, error) over message rows.
    """
    rows = np.flatnonzero(pairs.role == MESSAGE)
    sub = pairs.select(rows)
    present = (sub.u_present_a < eta_l) & (sub.u_present_b < eta_l) & sub.survived_r2
    corrupted = sub.corrupted_r1 | sub.corrupted_r2
    touched = sub.eve_touched_r1 | sub.eve_touched_r2
    random_bit = (sub.u_err < 0.5).astype(np.int8)
    bit = np.where(corrupted, 1 - sub.encoded_bit, sub.encoded_bit)
    bit = np.where(touched & ~corrupted, random_bit, bit).astype(np.int8)
    return rows, ~present, bit, bit != sub.encoded_bit


def bsm_decode(pair: PairRecord, rng: np.random.Generator | None = None) -> DecodeResult:
    """Bob's readout of one message pair (presence already recorded on the pair).

    An intercepted, otherwise clean pair reads out a uniformly random bit,
    drawn from ``rng``.
    """
    if pair.encoded_bit is None:
        raise ParameterError("pair carries no message")
    if not (pair.present_A and pair.present_B and pair.survived_r2):
        return DecodeResult(bit=None, lost=True, error=False)
    if pair.corrupted_r1 or pair.corrupted_r2:
        return DecodeResult(bit=1 - pair.encoded_bit, lost=False, error=True)
    if pair.eve_touched_r1 or pair.eve_touched_r2:
        if rng is None:
            raise ParameterError("an intercepted pair needs an rng to decode")
        bit = int(rng.integers(0, 2))
        return DecodeResult(bit=bit, lost=False, error=bit != pair.encoded_bit)
    return DecodeResult(bit=pair.encoded_bit, lost=False, error=False)


@dataclass(frozen=True)
class LeakAudit:
    eve_r1_hits: int
    eve_r2_hits: int
    matched_pairs: int
    message_pairs: int
    matched_fraction: float
    chi_bound: float | None

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def leakage_audit(pairs: PairTable, S1_hat: float | None = None) -> LeakAudit:
    """Count message pairs whose photons Eve touched in both rounds."""
    msg = pairs.role == MESSAGE
    matched = int((msg & pairs.eve_touched_r1 & pairs.eve_touched_r2).sum())
    n_msg = int(msg.sum())
    chi = None
    if S1_hat is not None and np.isfinite(S1_hat) and S1_hat > ca.CLASSICAL_BOUND:
        chi = ca.holevo_bound(min(S1_hat, ca.S_MAX))
    return LeakAudit(
        eve_r1_hits=int(pairs.eve_touched_r1.sum()),
        eve_r2_hits=int(pairs.eve_touched_r2.sum()),
        matched_pairs=matched,
        message_pairs=n_msg,
        matched_fraction=matched / n_msg if n_msg else 0.0,
        chi_bound=chi,
    )


@dataclass(frozen=True)
class RunReport:
    N: int
    N1: int
    n_check1: int
    n_check2: int
    n_message: int
    stats_r1: SecurityCheckStats
    stats_r2: SecurityCheckStats | None
    aborted_r1: bool
    aborted_r2: bool
    decoded_bits: np.ndarray
    bit_errors: int
    lost_messages: int
    leak_audit: LeakAudit
    pairs: PairTable = field(repr=False, compare=False)
    message_length: int = 0

    @property
    def aborted(self) -> bool:
        return self.aborted_r1 or self.aborted_r2

    @property
    def S1_hat(self) -> float:
        return _safe_chsh(self.stats_r1)

    @property
    def S2_hat(self) -> float:
        return _safe_chsh(self.stats_r2) if self.stats_r2 is not None else math.nan

    @property
    def loss_rate(self) -> float:
        return self.lost_messages / self.n_message if self.n_message else math.nan

    @property
    def error_rate(self) -> float:
        n = len(self.decoded_bits)
        return self.bit_errors / n if n else math.nan

    def as_dict(self) -> dict:
        return {
            "N": self.N,
            "N1": self.N1,
            "n_check1": self.n_check1,
            "n_check2": self.n_check2,
            "n_message": self.n_message,
            "aborted_r1": self.aborted_r1,
            "aborted_r2": self.aborted_r2,
            "stats_r1": self.stats_r1.as_dict(),
            "stats_r2": None if self.stats_r2 is None else self.stats_r2.as_dict(),
            "decoded_count": int(len(self.decoded_bits)),
            "bit_errors": self.bit_errors,
            "lost_messages": self.lost_messages,
            "loss_rate": None if math.isnan(self.loss_rate) else self.loss_rate,
            "error_rate": None if math.isnan(self.error_rate) else self.error_rate,
            "message_length": self.message_length,
            "leak_audit": self.leak_audit.as_dict(),
        }


def _safe_chsh(stats: SecurityCheckStats) -> float:
    try:
        return estimate_chsh(stats)[0]
    except InsufficientDataError:
        return math.nan


def _violates(stats: SecurityCheckStats) -> bool:
    s = _safe_chsh(stats)
    return bool(np.isfinite(s) and s > ca.CLASSICAL_BOUND)


def run_protocol(config: ProtocolConfig) -> RunReport:
    """Execute distribution, both checks, encoding, transmission and decoding.

    A round whose CHSH estimate does not exceed 2 (or cannot be formed from
    the available samples) aborts the run; later steps are then skipped and
    reported empty.
    """
    params, eve = config.params, config.eve
    table = correlator_table(eve)
    pairs = distribute_pairs(config)
    role = pairs.role
    n_c1, n_c2, n_msg = (int((role == r).sum()) for r in (CHECK1, CHECK2, MESSAGE))
    n_bits = 0 if config.message_bits is None else len(config.message_bits)
    if n_bits > n_msg:
        raise CapacityError(f"{n_bits} message bits but only {n_msg} message pairs")

    stats1, pa1, pb1 = _check_round(pairs, role == CHECK1, 1, params, table)
    present_a = pairs.present_a.copy()
    present_b = pairs.present_b.copy()
    present_a[role == CHECK1], present_b[role == CHECK1] = pa1, pb1
    pairs = pairs.replace(present_a=present_a, present_b=present_b)
    aborted_r1 = not _violates(stats1)
    empty = np.zeros(0, dtype=np.int8)

    def report(**kw) -> RunReport:
        base = dict(
            N=params.N,
            N1=len(pairs),
            n_check1=n_c1,
            n_check2=n_c2,
            n_message=n_msg,
            stats_r1=stats1,
            stats_r2=None,
            aborted_r1=aborted_r1,
            aborted_r2=False,
            decoded_bits=empty,
            bit_errors=0,
            lost_messages=0,
            leak_audit=leakage_audit(pairs, _safe_chsh(stats1)),
            pairs=pairs,
            message_length=n_bits,
        )
        base.update(kw)
        return RunReport(**base)

    if aborted_r1:
        return report()

    pairs, perm = encode_and_shuffle(
        pairs,
        config.message_bits,
        _substream(config.seed, _STREAM_SHUFFLE),
        shuffle=config.shuffle,
        message_rng=_substream(config.seed, _STREAM_MESSAGE),
    )
    pairs = transmit_round2(pairs, params, eve, _substream(config.seed, _STREAM_EVE), perm)
    stats2, pa2, pb2 = _check_round(pairs, pairs.role == CHECK2, 2, params, table)
    present_a, present_b = pairs.present_a.copy(), pairs.present_b.copy()
    c2 = pairs.role == CHECK2
    present_a[c2], present_b[c2] = pa2, pb2
    rows, lost, bits, err = decode_all(pairs, params.eta_l)
    present_a[rows] = (pairs.u_present_a[rows] < params.eta_l) & pairs.survived_r2[rows]
    present_b[rows] = pairs.u_present_b[rows] < params.eta_l
    pairs = pairs.replace(present_a=present_a, present_b=present_b)
    aborted_r2 = not _violates(stats2)
    audit = leakage_audit(pairs, _safe_chsh(stats1))
    if aborted_r2:
        return report(stats_r2=stats2, aborted_r2=True, leak_audit=audit, pairs=pairs)
    return report(
        stats_r2=stats2,
        decoded_bits=bits[~lost],
        bit_errors=int(err[~lost].sum()),
        lost_messages=int(lost.sum()),
        leak_audit=audit,
        pairs=pairs,
    )
