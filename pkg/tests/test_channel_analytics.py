import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diqsdc.channel_analytics import (
    CURVE_COLUMNS,
    S_MAX,
    UNBOUNDED,
    binary_entropy,
    distance_grid,
    eta_transmission,
    heralding_probability,
    holevo_bound,
    max_distance,
    practical_efficiency,
    purification_round,
    purified_capacity,
    round1_metrics,
    round2_metrics,
    secrecy_capacity,
    secrecy_capacity_original,
    sweep_curves,
)
from diqsdc.errors import (
    AbortDomainError,
    NonPurifiableError,
    NoPositiveCapacityError,
    ParameterError,
)
from diqsdc.fock_optics import distribute_entanglement
from diqsdc.params import SystemParams

DEFAULT = SystemParams()

# reference values computed by a standalone script from the closed forms
CS_AT_ZERO = 0.35072059712
CS_AT_ONE_KM = 0.27535857443
CS0_AT_ONE_KM = 0.04868507852
CHI_DEFAULT_S1 = 0.33050208339


@pytest.mark.parametrize(
    "x, want",
    [(0.0, 0.0), (1.0, 0.0), (0.5, 1.0), (0.11, 0.4999159582), (0.0578, 0.3186491167)],
)
def test_binary_entropy_values(x, want):
    assert binary_entropy(x) == pytest.approx(want, abs=1e-9)


@pytest.mark.parametrize("x", [-0.01, 1.01])
def test_binary_entropy_domain(x):
    with pytest.raises(ParameterError):
        binary_entropy(x)


@given(st.floats(0, 1))
def test_binary_entropy_symmetric_and_bounded(x):
    assert binary_entropy(x) == pytest.approx(binary_entropy(1 - x), abs=1e-12)
    assert 0.0 <= binary_entropy(x) <= 1.0


@pytest.mark.parametrize("L, want", [(0.0, 1.0), (50.0, 0.1), (6.68, 0.73520)])
def test_eta_transmission(L, want):
    assert eta_transmission(L) == pytest.approx(want, abs=1e-5)


def test_eta_transmission_rejects_negative():
    with pytest.raises(ParameterError):
        eta_transmission(-1.0)


def test_heralding_probability_closed_form():
    assert heralding_probability(1.0, 0.5) == pytest.approx(1 / 16)
    assert heralding_probability(0.5, 0.5) == pytest.approx(1 / 32)
    assert heralding_probability(1.0, 0.0) == 0.0


@pytest.mark.parametrize("T", [0.1, 0.3, 0.5, 0.8])
@pytest.mark.parametrize("L", [0.0, 1.0, 5.0])
def test_optics_oracle_is_twice_closed_form(T, L):
    p = DEFAULT.replace(L_AB=L, T=T)
    exact = distribute_entanglement(T, p.eta_t_prime).success_probability
    assert exact == pytest.approx(2 * heralding_probability(p.eta_t, T), abs=1e-12)


def test_round_metrics_examples():
    r1 = round1_metrics(0.98, 0.98)
    assert r1.S == pytest.approx(2.6621, abs=1e-4)
    assert r1.Q_sum == pytest.approx(0.0390, abs=1e-4)
    ideal = round1_metrics(1.0, 1.0)
    assert ideal.S == pytest.approx(S_MAX) and ideal.Q_sum == pytest.approx(0.0)
    r2 = round2_metrics(1.0, 0.98, 0.98)
    assert r2.Q_sum == pytest.approx(0.05783184, abs=1e-8)
    assert round2_metrics(0.0, 0.98, 0.98).Q_sum == 0.5


@settings(max_examples=100)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.25, 1))
def test_round_two_never_beats_round_one(eta_t, eta_l, F):
    r1, r2 = round1_metrics(eta_l, F), round2_metrics(eta_t, eta_l, F)
    assert r2.S <= r1.S + 1e-12
    assert r2.Q_sum >= r1.Q_sum - 1e-12 or F**2 < 0.5
    if F**2 >= 0.5:
        assert 0.0 <= r2.Q_sum <= 0.5 + 1e-12


def test_holevo_bound_values():
    assert holevo_bound(S_MAX) == pytest.approx(0.0, abs=1e-12)
    assert holevo_bound(2.662) == pytest.approx(0.3306, abs=1e-4)
    with pytest.raises(AbortDomainError):
        holevo_bound(2.0)
    with pytest.raises(AbortDomainError):
        holevo_bound(1.5)
    with pytest.raises(ParameterError):
        holevo_bound(2.9)


def test_holevo_bound_decreasing():
    S = np.linspace(2.0001, S_MAX, 200)
    chi = [holevo_bound(s) for s in S]
    assert all(a > b for a, b in zip(chi, chi[1:]))
    assert chi[0] == pytest.approx(1.0, abs=1e-2)


def test_capacity_ideal_link():
    rep = secrecy_capacity(SystemParams(F=1.0, eta_m=1.0, L_AB=0.0))
    assert rep.Cs == pytest.approx(1.0, abs=1e-12)
    assert rep.Qt == pytest.approx(0.0, abs=1e-12)
    assert rep.chi_S1 == pytest.approx(0.0, abs=1e-12)
    assert not rep.aborted


@pytest.mark.parametrize(
    "L, cs, cs0", [(0.0, CS_AT_ZERO, CS_AT_ZERO), (1.0, CS_AT_ONE_KM, CS0_AT_ONE_KM)]
)
def test_capacity_reference_points(L, cs, cs0):
    rep = secrecy_capacity(DEFAULT.replace(L_AB=L))
    assert rep.Cs == pytest.approx(cs, abs=1e-9)
    assert rep.Cs0 == pytest.approx(cs0, abs=1e-9)
    assert rep.chi_S1 == pytest.approx(CHI_DEFAULT_S1, abs=1e-9)


def test_capacity_near_published_endpoints():
    assert secrecy_capacity(DEFAULT.replace(L_AB=6.68)).Cs == pytest.approx(0.0, abs=5e-3)
    assert secrecy_capacity_original(DEFAULT.replace(L_AB=1.18)) == pytest.approx(0.0, abs=1e-2)


def test_capacity_report_bookkeeping():
    rep = secrecy_capacity(DEFAULT)
    assert rep.I_AB == pytest.approx(1 - binary_entropy(rep.Qt))
    assert rep.r_loss == pytest.approx(1 - DEFAULT.eta_l**2 * DEFAULT.eta_t)
    assert rep.r_error == pytest.approx(1 - 0.98**2)
    assert rep.r_loss0 == pytest.approx(1 - DEFAULT.eta_l**2 * DEFAULT.eta_t**2)
    assert set(rep.as_dict()) >= {"Cs", "Cs0", "Es", "Es0", "aborted"}


def test_round_one_failure_zeroes_capacity_and_aborts():
    rep = secrecy_capacity(DEFAULT.replace(F=0.6))
    assert rep.S1 <= 2 and rep.Cs == 0.0 and rep.aborted


def test_round_two_failure_aborts_but_keeps_s1_bound():
    rep = secrecy_capacity(DEFAULT.replace(L_AB=6.0))
    assert rep.S2 <= 2 < rep.S1
    assert rep.aborted
    assert rep.Cs > 0
    assert math.isnan(rep.chi_S2)


@pytest.mark.parametrize("L", np.arange(0.0, 8.0, 0.25))
def test_heralded_capacity_dominates(L):
    p = DEFAULT.replace(L_AB=float(L))
    assert secrecy_capacity_original(p) <= secrecy_capacity(p).Cs + 1e-12


@settings(max_examples=60, deadline=None)
@given(
    F=st.floats(0.25, 1),
    eta_m=st.floats(0, 1),
    T=st.floats(0, 1),
    L=st.floats(0, 200),
)
def test_rates_stay_in_domain(F, eta_m, T, L):
    rep = secrecy_capacity(SystemParams(F=F, eta_m=eta_m, T=T, L_AB=L))
    assert 0.0 <= rep.Cs <= 1.0
    assert 0.0 <= rep.Cs0 <= 1.0
    assert rep.Es >= 0 and rep.Es0 >= 0
    assert 0.0 <= rep.Qt <= 1.0


def test_efficiency_reference_and_ratio():
    es, es0 = practical_efficiency(DEFAULT.replace(L_AB=0.0))
    assert es == pytest.approx(0.25 * 1e7 / 16 * CS_AT_ZERO, rel=1e-9)
    assert es == pytest.approx(5.48e4, rel=1e-3)
    # at L=0 both capacities agree, so the ratio is P1 / p
    assert es / es0 == pytest.approx(625.0, rel=1e-9)


def test_efficiency_zero_without_capacity():
    es, es0 = practical_efficiency(DEFAULT.replace(L_AB=7.0))
    assert es == 0.0 and es0 == 0.0


def test_max_distance_defaults():
    assert max_distance(DEFAULT, "current") == pytest.approx(6.70, abs=0.02)
    assert max_distance(DEFAULT, "original") == pytest.approx(1.19, abs=0.02)


def test_max_distance_is_a_zero_crossing():
    L = max_distance(DEFAULT)
    assert secrecy_capacity(DEFAULT.replace(L_AB=L - 0.01)).Cs > 0
    assert secrecy_capacity(DEFAULT.replace(L_AB=L + 0.01)).Cs == 0


def test_max_distance_unbounded_and_errors():
    assert max_distance(SystemParams(F=1.0, eta_m=1.0)) == UNBOUNDED
    with pytest.raises(NoPositiveCapacityError):
        max_distance(DEFAULT.replace(F=0.7))
    with pytest.raises(ParameterError):
        max_distance(DEFAULT, "other")


def test_purification_round_reference():
    F1, D = purification_round(0.98)
    assert F1 == pytest.approx(0.98640, abs=1e-5)
    assert D == pytest.approx(0.97369, abs=1e-5)
    assert purification_round(1.0) == pytest.approx((1.0, 1.0))


@pytest.mark.parametrize("F", [0.5, 0.3, 1.2])
def test_purification_domain(F):
    with pytest.raises(NonPurifiableError):
        purification_round(F)


@pytest.mark.parametrize("F0", [0.55, 0.7, 0.9, 0.98])
def test_purification_monotone(F0):
    F = F0
    for _ in range(60):
        F_next, D = purification_round(F)
        assert F_next >= F - 1e-15
        assert 0 < D <= 1
        F = F_next
    assert F == pytest.approx(1.0, abs=1e-9)


def test_purified_capacity_without_rounds():
    p = DEFAULT
    plan = purified_capacity(p, 0)
    assert plan.F_final == p.F and plan.per_round == []
    qt = 0.5 - p.eta_t * p.eta_l**2 * (p.F - 0.5)
    assert plan.Qt_prime == pytest.approx(qt)
    want = 0.25 * p.R_rep * heralding_probability(p.eta_t, p.T) * (1 - binary_entropy(qt))
    assert plan.Esm == pytest.approx(want)


def test_purified_efficiency_composition():
    p = DEFAULT
    plan = purified_capacity(p, 2)
    (F1, D1), (F2, D2) = plan.per_round
    assert (F1, D1) == pytest.approx(purification_round(p.F))
    assert (F2, D2) == pytest.approx(purification_round(F1))
    base = 0.25 * p.R_rep * heralding_probability(p.eta_t, p.T)
    assert plan.Esm == pytest.approx(base * D1 / 2 * D2 / 2 * (1 - binary_entropy(plan.Qt_prime)))


@pytest.mark.parametrize("n", [1, 2, 5])
def test_purification_never_lowers_capacity(n):
    for L in (0.0, 2.0, 5.0):
        p = DEFAULT.replace(L_AB=L)
        assert purified_capacity(p, n).Cs_prime >= purified_capacity(p, 0).Cs_prime - 1e-12


def test_purification_drives_leakage_to_zero_with_perfect_devices():
    p = SystemParams.with_local_efficiency(1.0, F=0.9)
    chis = [purified_capacity(p, n).chi_S1 for n in range(40)]
    assert all(a >= b for a, b in zip(chis, chis[1:]))
    assert chis[-1] < 1e-6


def test_purification_recurrence_is_pluggable():
    plan = purified_capacity(DEFAULT, 3, recurrence=lambda F: (F, 1.0))
    assert plan.F_final == DEFAULT.F
    assert [d for _, d in plan.per_round] == [1.0, 1.0, 1.0]


def test_purified_capacity_rejects_bad_rounds():
    with pytest.raises(ParameterError):
        purified_capacity(DEFAULT, -1)


def test_distance_grid():
    g = distance_grid(0.01, 8.0, 0.01)
    assert len(g) == 800
    assert g[0] == 0.01 and g[-1] == 8.0
    with pytest.raises(ParameterError):
        distance_grid(0, 1, 0)


def test_sweep_curves_rows_match_point_evaluations():
    rows = sweep_curves(DEFAULT, 0.0, 2.0, 0.5)
    assert [r["L_km"] for r in rows] == [0.0, 0.5, 1.0, 1.5, 2.0]
    for r in rows:
        assert set(r) == set(CURVE_COLUMNS)
        rep = secrecy_capacity(DEFAULT.replace(L_AB=r["L_km"]))
        assert r["Cs"] == rep.Cs and r["Es0"] == rep.Es0
        assert r["log10Es"] == pytest.approx(math.log10(rep.Es))


def test_sweep_curves_shape():
    rows = sweep_curves(DEFAULT)
    cs = [r["Cs"] for r in rows]
    qt = [r["Qt"] for r in rows]
    assert all(a >= b for a, b in zip(cs, cs[1:]))
    assert all(a < b for a, b in zip(qt, qt[1:]))
    # S1 involves only local devices
    assert len({r["S1"] for r in rows}) == 1
    assert rows[-1]["log10Es0"] == -math.inf
    assert rows[0]["Es"] / rows[0]["Es0"] == pytest.approx(629.48, abs=0.05)
