"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the criterion
summary lines.  Tolerances are pinned here and nowhere else.
"""

import time
from contextlib import contextmanager

import pytest

from penaltysim import btcscript as btc
from penaltysim import cml
from penaltysim import efficiency as eff
from penaltysim.cli import main as cli_main
from penaltysim.errors import SizeLimitExceeded
from penaltysim.escrow import (
    EscrowHub,
    Ledger,
    MlTerms,
    ledger_invariant_check,
    ledger_schedule,
    replay_ladder_over_cr,
)
from penaltysim.fairness import (
    DiscountSpec,
    chi_gap_scan,
    default_delta_grid,
    fairness_check,
    ladder_closed_form,
    ladder_trading_example,
    multilock_closed_form,
    npc,
    round_robin_analysis,
)
from penaltysim.schedule import (
    CashFlow,
    FlowKind,
    ProtocolKind,
    ScenarioParams,
    Schedule,
    balance_trace,
    generate_schedule,
    max_lock_window,
    total_deposit,
)

import figdata
from escrow_fuzz import run_random_trace

P = ProtocolKind
TOKENS = {"L": P.LADDER, "ML": P.MULTI_LOCK, "AL": P.AMORTIZED_LADDER,
          "LL": P.LOCKED_LADDER, "PL": P.PLANTED_LADDER}
MINUTE_238 = DiscountSpec.from_annual_bps(238, "minute", 60)


@contextmanager
def criterion(number: int, label: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number:2d}: FAIL - {label}")
        raise
    print(f"ACCEPTANCE {number:2d}: PASS - {label}")


def test_criterion_01_rate_conversion(capsys):
    with criterion(1, "rate conversion 238 bps -> 0.0235/yr in under 1 s"):
        start = time.perf_counter()
        code = cli_main(["rates", "--bps", "238"])
        elapsed = time.perf_counter() - start
        out = capsys.readouterr().out
        assert code == 0
        year = float(out.split("year ")[1].split("\n")[0])
        assert abs(year - 0.0235) <= 1e-4
        assert elapsed < 1.0


def test_criterion_02_toy_net_present_cost():
    with criterion(2, "textbook 100/50/50 example costs 44.5 +- 0.1"):
        spec = DiscountSpec(0.5, "hour", minutes_per_round=60,
                            form="discrete")
        sched = Schedule(
            params=ScenarioParams(P.MULTI_LOCK, 2, q=1),
            events=[CashFlow(1, 0, 100, FlowKind.DEPOSIT),
                    CashFlow(1, 1, 50, FlowKind.REFUND),
                    CashFlow(1, 2, 50, FlowKind.REFUND)],
            total_rounds=2)
        chi = npc(sched, 1, spec).chi
        assert abs(chi - 44.5) <= 0.1


def test_criterion_03_ladder_reference_traces():
    with criterion(3, "4-party ladder reproduces all reference traces"):
        s = generate_schedule(ScenarioParams(P.LADDER, 4))
        for party, want in figdata.LADDER4_TRACES.items():
            assert balance_trace(s, party) == want


def test_criterion_04_totals_and_windows_at_55():
    with criterion(4, "55-party deposit totals and lock windows exact"):
        n = 55
        for token, (p1, p55) in figdata.TOTALS_55.items():
            stages = 2 if token in ("LL", "PL") else 1
            s = generate_schedule(ScenarioParams(TOKENS[token], n,
                                                 stages=stages))
            assert total_deposit(s, 1) == p1, token
            assert total_deposit(s, n) == p55, token
        ladder = generate_schedule(ScenarioParams(P.LADDER, n))
        assert max_lock_window(ladder, 1) == 55
        assert max_lock_window(ladder, n) == 108
        for token in ("ML", "AL"):
            s = generate_schedule(ScenarioParams(TOKENS[token], n))
            assert all(max_lock_window(s, i) == 1 for i in range(1, n + 1))
        for token, want in (("LL", 543), ("PL", 328)):
            s = generate_schedule(ScenarioParams(TOKENS[token], n, stages=2))
            assert max(max_lock_window(s, i) for i in range(1, n + 1)) == want


def test_criterion_05_efficiency_data_points():
    with criterion(5, "script/fee/day series match published data in <5 s"):
        start = time.perf_counter()
        for token, proto in TOKENS.items():
            r = 2 if token in ("LL", "PL") else 1
            for idx, n in enumerate(eff.N_GRID):
                assert eff.script_bits(proto, n, r) == \
                    figdata.SCRIPT_BITS[token][idx]
                fee = eff.fee_usd(eff.tx_count(proto, n, r))
                assert abs(fee - figdata.FEES_USD[token][idx]) <= 2.0
                assert eff.exec_days_for(proto, n, r) == \
                    figdata.DAYS[token][idx]
        assert eff.tx_count(P.LOCKED_LADDER, 55, 2) == 12312
        assert time.perf_counter() - start < 5.0


def test_criterion_06_theorem_checks():
    with criterion(6, "fairness theorems and closed forms"):
        grid = default_delta_grid(50)
        ladder = generate_schedule(ScenarioParams(P.LADDER, 6))
        assert not fairness_check(ladder, grid).fair
        ml = generate_schedule(ScenarioParams(P.MULTI_LOCK, 6))
        assert fairness_check(ml, grid).fair
        samples = [DiscountSpec.from_annual_bps(b, "minute")
                   for b in (1, 50, 238, 1000, 10000)]
        for n in range(2, 21):
            s = generate_schedule(ScenarioParams(P.LADDER, n, q=2))
            m = generate_schedule(ScenarioParams(P.MULTI_LOCK, n, q=2))
            for spec in samples:
                form = ladder_closed_form(n, 2, spec)
                for i in range(1, n + 1):
                    got = npc(s, i, spec).chi
                    assert abs(form[i - 1] - got) <= \
                        1e-9 * max(1e-6, abs(form[i - 1])), (n, i)
                want = multilock_closed_form(n, 2, spec)
                assert abs(npc(m, 1, spec).chi - want) <= \
                    1e-9 * max(1e-6, abs(want))
        chi_1, _ = ladder_trading_example(d=10000, rate_bps=238)
        assert abs(chi_1 - 0.11) <= 0.02


def test_criterion_07_cost_chart_properties():
    with criterion(7, "55-party cost chart: symmetry, ordering, +-50% band"):
        chis = {}
        for token, proto in TOKENS.items():
            stages = 2 if token in ("LL", "PL", "AL") else 1
            s = generate_schedule(ScenarioParams(proto, 55, stages=stages,
                                                 q=10000))
            chis[token] = [npc(s, p, MINUTE_238).chi
                           for p in (1, 10, 25, 55)]
            if token == "ML":
                full = [npc(s, p, MINUTE_238).chi for p in range(1, 56)]
                assert len(set(full)) == 1  # (a) exact symmetry
        for token in ("L", "LL", "PL"):  # (b) strict ordering
            vals = chis[token]
            assert all(a < b for a, b in zip(vals, vals[1:])), token
        assert all(a < b for a, b in zip(chis["LL"], chis["PL"]))  # (c)
        for token in ("L", "ML", "AL"):  # (d) +-50% of published points
            for mine, ref in zip(chis[token], figdata.CHI_BPS_55[token]):
                assert abs(mine - ref) <= 0.5 * ref, token


def test_criterion_08_round_robin_rotation():
    with criterion(8, "rotation polynomials: bounded roots, oracle agrees"):
        for n in (2, 3):
            base = generate_schedule(ScenarioParams(P.LADDER, n))
            tau = base.total_rounds
            for k in (2, 3):
                analyses = round_robin_analysis(base, k)
                for (i, j), a in analyses.items():
                    assert not a.identically_zero
                    assert a.fair_rate_count <= k * tau
                    assert a.fair_rate_count == chi_gap_scan(base, i, j, k)


def test_criterion_09_escrow_invariants():
    with criterion(9, "10k adversarial traces conserve; ladder replay exact"):
        for seed in range(10_000):
            run_random_trace(seed)
        for n in range(2, 11):
            ledger = replay_ladder_over_cr(n)
            got = ledger_schedule(ledger, ScenarioParams(P.LADDER, n))
            want = generate_schedule(ScenarioParams(P.LADDER, n))
            assert got.events == want.events


def test_criterion_10_cml_penalties_contract():
    with criterion(10, "penalties contract over all policies, n in [2,8]"):
        start = time.perf_counter()
        specs = [DiscountSpec.from_annual_bps(b, "minute")
                 for b in (10, 238, 5000)]
        for n in range(2, 9):
            policies = [cml.AdversaryPolicy()]
            policies.append(cml.AdversaryPolicy(
                frozenset({1}), cml.Behavior.ABORT_AT_LOCK))
            for s_count in range(1, n):
                policies.append(cml.AdversaryPolicy(
                    frozenset(range(1, s_count + 1)),
                    cml.Behavior.ABORT_AT_REDEEM))
            policies.append(cml.AdversaryPolicy(
                frozenset({n}), cml.Behavior.WRONG_WITNESS))
            inputs = [bytes([i]) * 16 for i in range(1, n + 1)]
            for pol in policies:
                run = cml.run_cml(n, 1, 2, inputs, cml.xor_function, pol,
                                  seed=n)
                assert ledger_invariant_check(run.ledger.events).ok
                honest = [i for i in range(1, n + 1)
                          if not pol.misbehaves(i)]
                withheld = len([i for i in range(1, n + 1)
                                if pol.misbehaves(i) and pol.behavior
                                is not cml.Behavior.ABORT_AT_LOCK])
                for i in honest:
                    out = run.outcomes[i]
                    assert out.kind is not cml.OutcomeKind.PENALIZED
                    if out.kind is cml.OutcomeKind.OUTPUT:
                        assert out.output == run.expected_output
                        assert run.ledger.net_change(i) == 0
                    elif out.kind is cml.OutcomeKind.COMPENSATED:
                        assert run.ledger.net_change(i) == withheld
                    else:
                        assert run.ledger.net_change(i) == 0
                for spec in specs:
                    honest_chi = {npc(run.schedule, i, spec).chi
                                  for i in honest}
                    assert len(honest_chi) == 1
        assert time.perf_counter() - start < 10.0


def test_criterion_11_bitcoin_realization():
    with criterion(11, "script flows match escrow; 15 parties hit the cap"):
        q = 13
        for n in range(2, 15):
            hub = EscrowHub(Ledger({i: (n - 1) * q
                                    for i in range(1, n + 1)}))
            ml = hub.ml_open("m", n)
            terms = MlTerms((n - 1) * q,
                            tuple((lambda w: w == b"w") for _ in range(n)), 2)
            hub.tick()
            for i in range(1, n + 1):
                ml.lock(i, terms)
            hub.tick()
            ml.finalize()
            for i in range(1, n + 1):
                ml.redeem(i, b"w")
            hub.tick()
            honest_nets = {i: hub.ledger.net_change(i)
                           for i in range(1, n + 1)}
            assert btc.run_ml_flow(n, q, 150) == honest_nets

            hub = EscrowHub(Ledger({i: (n - 1) * q
                                    for i in range(1, n + 1)}))
            ml = hub.ml_open("m", n)
            hub.tick()
            for i in range(1, n + 1):
                ml.lock(i, terms)
            hub.tick()
            ml.finalize()
            for i in range(2, n + 1):
                ml.redeem(i, b"w")
            hub.tick()
            abort_nets = {i: hub.ledger.net_change(i)
                          for i in range(1, n + 1)}
            assert btc.run_ml_flow(n, q, 150, abort_party=1) == abort_nets

        with pytest.raises(SizeLimitExceeded):
            keyring = btc.Keyring()
            funding = btc.make_funding_tx(15, q, keyring)
            hashes = [btc.hash256(f"s{i}".encode()) for i in range(1, 16)]
            btc.build_ml_lock_tx(15, q, hashes, keyring, 150, funding)

        report = btc.malleability_demo()
        assert report.legacy_id_changed
        assert not report.segwit_id_changed
        assert report.dependent_valid_segwit
        assert not report.dependent_valid_legacy
