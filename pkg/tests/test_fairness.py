import math

import pytest
from hypothesis import given, settings, strategies as st

from penaltysim.errors import (
    DegenerateFair,
    InsufficientParties,
    InvalidParameters,
)
from penaltysim.fairness import (
    DiscountSpec,
    annual_bps_to_continuous,
    chi_gap_scan,
    collateral_game,
    count_roots_in_unit_interval,
    default_delta_grid,
    eta,
    fairness_check,
    fairness_report,
    ladder_closed_form,
    ladder_trading_example,
    multilock_closed_form,
    nash_equilibrium,
    npc,
    npc_all,
    rescale_rate,
    rotation_polynomial,
    round_robin_analysis,
)
from penaltysim.schedule import (
    AbortSpec,
    CashFlow,
    FlowKind,
    ProtocolKind,
    ScenarioParams,
    Schedule,
    generate_schedule,
)

from figdata import CHI_BPS_55


MINUTE_238 = DiscountSpec.from_annual_bps(238, "minute", 60)


def make(proto, n, stages=1, q=1, abort=None):
    return generate_schedule(ScenarioParams(proto, n, stages, q, abort))


# --- Rate conversion --------------------------------------------------------

def test_conversion_of_overnight_rate():
    assert annual_bps_to_continuous(238) == pytest.approx(0.0235, abs=1e-4)
    assert annual_bps_to_continuous(0) == 0.0
    assert annual_bps_to_continuous(525) == pytest.approx(math.log(1.0525))


def test_rescale_rate():
    assert rescale_rate(0.0235, "minute") == pytest.approx(4.47e-8, abs=1e-10)
    assert rescale_rate(0.0235, "hour") == pytest.approx(2.68e-6, abs=1e-8)
    assert rescale_rate(0, "hour") == 0.0
    with pytest.raises(ValueError):
        rescale_rate(0.1, "fortnight")


def test_eta_values():
    assert eta(0, MINUTE_238) == 1.0
    discrete = DiscountSpec(0.5, "hour", form="discrete")
    assert eta(1, discrete) == pytest.approx(1 / 1.5, abs=1e-4)
    spec = DiscountSpec(4.47e-8, "minute")
    assert eta(60, spec) == pytest.approx(0.99999732, abs=1e-8)
    assert eta(10, spec) < eta(5, spec) < 1.0


# --- Net present cost -------------------------------------------------------

def toy_schedule():
    params = ScenarioParams(ProtocolKind.MULTI_LOCK, 2, q=1)
    events = [CashFlow(1, 0, 100, FlowKind.DEPOSIT),
              CashFlow(1, 1, 50, FlowKind.REFUND),
              CashFlow(1, 2, 50, FlowKind.REFUND)]
    return Schedule(params=params, events=events, total_rounds=2)


def test_toy_cost_of_participation():
    spec = DiscountSpec(0.5, "hour", minutes_per_round=60, form="discrete")
    chi = npc(toy_schedule(), 1, spec).chi
    assert chi == pytest.approx(44.5, abs=0.1)


@pytest.mark.parametrize("proto,stages", [
    (ProtocolKind.LADDER, 1), (ProtocolKind.MULTI_LOCK, 1),
    (ProtocolKind.LOCKED_LADDER, 2), (ProtocolKind.PLANTED_LADDER, 2),
    (ProtocolKind.AMORTIZED_LADDER, 2),
])
def test_zero_rate_honest_run_costs_nothing(proto, stages):
    flat = DiscountSpec(0.0, "minute")
    s = make(proto, 7, stages=stages, q=3)
    assert all(abs(c.chi) < 1e-12 for c in npc_all(s, flat))


def test_multilock_chi_identical_and_matches_direct_sum():
    n, q = 55, 10000
    s = make(ProtocolKind.MULTI_LOCK, n, q=q)
    chis = [npc(s, i, MINUTE_238).chi for i in range(1, n + 1)]
    assert len(set(chis)) == 1
    # independent summation straight from the definition
    d = MINUTE_238.delta_per_unit
    direct = (n - 1) * q * (math.exp(-60 * d) - math.exp(-120 * d))
    assert chis[0] == pytest.approx(direct, rel=1e-9)


def test_npc_linear_in_schedule_concatenation():
    spec = MINUTE_238
    a = make(ProtocolKind.LADDER, 5)
    b = make(ProtocolKind.MULTI_LOCK, 5)
    shifted = [CashFlow(e.party, e.round + a.total_rounds, e.amount, e.kind)
               for e in b.events]
    merged = Schedule(params=a.params, events=a.events + shifted,
                      total_rounds=a.total_rounds + b.total_rounds)
    b_shift = Schedule(params=b.params, events=shifted,
                       total_rounds=a.total_rounds + b.total_rounds)
    for party in (1, 3, 5):
        want = npc(a, party, spec).chi + npc(b_shift, party, spec).chi
        assert npc(merged, party, spec).chi == pytest.approx(want, rel=1e-12)


# --- Closed forms -----------------------------------------------------------

DELTA_SAMPLES = [DiscountSpec.from_annual_bps(b, "minute", 60)
                 for b in (1, 50, 238, 1000, 10000)]


@pytest.mark.parametrize("n", list(range(2, 21)))
def test_ladder_closed_form_matches_generator(n):
    for spec in DELTA_SAMPLES:
        s = make(ProtocolKind.LADDER, n, q=7)
        gen = [npc(s, i, spec).chi for i in range(1, n + 1)]
        form = ladder_closed_form(n, 7, spec)
        for a, b in zip(form, gen):
            assert a == pytest.approx(b, rel=1e-9, abs=1e-15)


def test_ladder_closed_form_zero_rate():
    flat = DiscountSpec(0.0, "minute")
    assert ladder_closed_form(4, 1, flat) == pytest.approx([0, 0, 0, 0])


def test_ladder_chi_monotone_in_party():
    chis = ladder_closed_form(30, 1, MINUTE_238)
    assert all(chis[i] < chis[i + 1] for i in range(28))


@pytest.mark.parametrize("n", list(range(2, 21)))
def test_multilock_closed_form_matches_generator(n):
    for spec in DELTA_SAMPLES:
        honest = make(ProtocolKind.MULTI_LOCK, n, q=3)
        assert multilock_closed_form(n, 3, spec) == pytest.approx(
            npc(honest, 1, spec).chi, rel=1e-9, abs=1e-15)
        aborted = generate_schedule(ScenarioParams(
            ProtocolKind.MULTI_LOCK, n, q=3, abort=AbortSpec(n, 2)))
        want = multilock_closed_form(n, 3, spec, t=2, s=1)
        assert npc(aborted, 1, spec).chi == pytest.approx(
            want, rel=1e-9, abs=1e-15)


def test_multilock_closed_form_compensation_sign():
    flat = DiscountSpec(0.0, "minute")
    assert multilock_closed_form(3, 1, flat, t=2, s=0) == 0
    assert multilock_closed_form(3, 1, flat, t=2, s=1) == -1


def test_trading_example_first_party_cost():
    chi_1, chi_55 = ladder_trading_example(10000, 238)
    assert chi_1 == pytest.approx(0.11, abs=0.02)
    assert chi_55 > chi_1


# --- Fairness verdicts ------------------------------------------------------

def test_multilock_fair_on_grid():
    s = make(ProtocolKind.MULTI_LOCK, 5)
    assert fairness_check(s, default_delta_grid(50)).fair


def test_ladder_fair_at_zero_rate_only():
    s = make(ProtocolKind.LADDER, 4)
    assert fairness_check(s, [DiscountSpec(0.0, "minute")]).fair
    verdict = fairness_check(s, default_delta_grid(50))
    assert not verdict.fair
    assert verdict.witness_pair == (1, 2)
    assert verdict.max_gap > 0


def test_fairness_needs_two_honest_parties():
    s = generate_schedule(ScenarioParams(
        ProtocolKind.MULTI_LOCK, 2, abort=AbortSpec(1, 2)))
    with pytest.raises(InsufficientParties):
        fairness_check(s, DELTA_SAMPLES)


def test_fairness_report_shape():
    report = fairness_report(ProtocolKind.LADDER, 55)
    assert report["verdict"] == "Unfair"
    assert report["witness_pair"] == [1, 2]
    assert len(report["per_party_chi"]) == 55


# --- The published cost chart ----------------------------------------------

RUNS_55 = {
    "ML": (ProtocolKind.MULTI_LOCK, 1),
    "L": (ProtocolKind.LADDER, 1),
    "AL": (ProtocolKind.AMORTIZED_LADDER, 2),
    "LL": (ProtocolKind.LOCKED_LADDER, 2),
    "PL": (ProtocolKind.PLANTED_LADDER, 2),
}


def chi_samples(token):
    proto, stages = RUNS_55[token]
    s = make(proto, 55, stages=stages, q=10000)
    return [npc(s, p, MINUTE_238).chi for p in (1, 10, 25, 55)]


def test_locked_beats_planted_per_party():
    ll, pl = chi_samples("LL"), chi_samples("PL")
    assert all(a < b for a, b in zip(ll, pl))


@pytest.mark.parametrize("token", ["L", "LL", "PL"])
def test_chi_strictly_ordered_by_party(token):
    chis = chi_samples(token)
    assert all(a < b for a, b in zip(chis, chis[1:]))


@pytest.mark.parametrize("token", ["ML", "L", "AL"])
def test_chi_within_half_band_of_published(token):
    for mine, ref in zip(chi_samples(token), CHI_BPS_55[token]):
        assert abs(mine - ref) <= 0.5 * ref


# --- Round robin -------------------------------------------------------------

def test_round_robin_multilock_is_degenerate():
    s = make(ProtocolKind.MULTI_LOCK, 4)
    with pytest.raises(DegenerateFair):
        round_robin_analysis(s, k=2)


@pytest.mark.parametrize("n,k", [(2, 2), (2, 3), (3, 2), (3, 3)])
def test_round_robin_ladder_counts(n, k):
    s = make(ProtocolKind.LADDER, n)
    tau = s.total_rounds
    analyses = round_robin_analysis(s, k)
    for (i, j), a in analyses.items():
        assert not a.identically_zero
        assert len(a.coefficients) - 1 <= k * tau
        assert a.fair_rate_count <= k * tau
        assert a.fair_rate_count == chi_gap_scan(s, i, j, k)


def test_rotation_polynomial_integer_coefficients():
    s = make(ProtocolKind.LADDER, 3)
    coeffs = rotation_polynomial(s, 1, 2, 2)
    assert all(isinstance(c, int) for c in coeffs)
    assert sum(abs(c) for c in coeffs) > 0


def test_root_counter_on_known_polynomial():
    # x(1-2x): root at 0.5 inside (0,1); endpoints excluded
    count, roots = count_roots_in_unit_interval([0, 1, -2])
    assert count == 1
    assert roots[0] == pytest.approx(0.5, abs=1e-9)


# --- Collateral game ---------------------------------------------------------

def test_abort_dominates_when_last_player_loses():
    game = collateral_game(100, 1, 200, last_wins=False)
    assert game.last_player_abort_strictly_dominates()


def test_collateral_must_be_small():
    with pytest.raises(InvalidParameters):
        collateral_game(100, 100, 200, last_wins=False)


def test_nash_profile_under_outcome_sweep():
    assert nash_equilibrium(100, 1, 200) == ("cooperate",
                                             "abort_if_unsatisfied")


# --- Property: eta monotone, npc sign ---------------------------------------

@settings(max_examples=60, deadline=None)
@given(bps=st.floats(min_value=1, max_value=10000),
       t=st.floats(min_value=0.1, max_value=1e6))
def test_eta_decreasing_property(bps, t):
    spec = DiscountSpec.from_annual_bps(bps, "minute")
    assert 0 < eta(t, spec) < 1
    assert eta(t, spec) > eta(t * 1.5, spec)
