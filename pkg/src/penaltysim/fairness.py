"""Discounting, net present cost of participation, and fairness analysis.

A coin moved at round t is valued today at eta(t).  The default model is the
continuous form eta(t) = exp(-t * delta) with the rate rescaled from an
annualized basis-point quote; a discrete form 1/(1+rho)^t is supported as
well because the classic textbook example uses a 50% discrete hourly rate.

With q = 10000, the net present cost chi reads directly in basis points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateFair, InsufficientParties, InvalidParameters
from .schedule import (
    FlowKind,
    ProtocolKind,
    ScenarioParams,
    Schedule,
    generate_schedule,
)

MINUTES_PER_YEAR = 365 * 24 * 60
HOURS_PER_YEAR = 365 * 24


def annual_bps_to_continuous(bps: float) -> float:
    """Continuously-compounded annual rate from an annualized bps quote.

    delta = ln(1 + bps/10000); e.g. 238 bps -> 0.0235.
    """
    if bps < 0:
        raise ValueError("rate must be non-negative")
    return math.log(1.0 + bps / 10000.0)


def rescale_rate(delta_per_year: float, target: str) -> float:
    """Rescale a continuous annual rate to an hourly or minute rate."""
    if delta_per_year < 0:
        raise ValueError("rate must be non-negative")
    if target == "hour":
        return delta_per_year / HOURS_PER_YEAR
    if target == "minute":
        return delta_per_year / MINUTES_PER_YEAR
    if target == "year":
        return delta_per_year
    raise ValueError(f"unknown target unit {target!r}")


@dataclass(frozen=True)
class DiscountSpec:
    """Discount model: rate per time unit plus round-to-time metadata."""

    delta_per_unit: float
    time_unit: str = "minute"  # year | hour | minute | round
    minutes_per_round: float = 60.0
    form: str = "continuous"   # continuous | discrete

    def __post_init__(self):
        if self.delta_per_unit < 0:
            raise ValueError("discount rate must be non-negative")
        if self.time_unit not in ("year", "hour", "minute", "round"):
            raise ValueError(f"unknown time unit {self.time_unit!r}")
        if self.form not in ("continuous", "discrete"):
            raise ValueError(f"unknown discount form {self.form!r}")
        if self.minutes_per_round <= 0:
            raise ValueError("minutes_per_round must be positive")

    @classmethod
    def from_annual_bps(cls, bps: float, time_unit: str = "minute",
                        minutes_per_round: float = 60.0) -> "DiscountSpec":
        delta_year = annual_bps_to_continuous(bps)
        return cls(rescale_rate(delta_year, time_unit), time_unit,
                   minutes_per_round)

    def round_to_units(self, rnd: float) -> float:
        if self.time_unit == "round":
            return rnd
        minutes = rnd * self.minutes_per_round
        if self.time_unit == "minute":
            return minutes
        if self.time_unit == "hour":
            return minutes / 60.0
        return minutes / MINUTES_PER_YEAR


def eta(t: float, spec: DiscountSpec) -> float:
    """Present value of a unit coin moved t time-units from now."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if spec.form == "continuous":
        return math.exp(-t * spec.delta_per_unit)
    return (1.0 + spec.delta_per_unit) ** (-t)


def eta_at_round(rnd: float, spec: DiscountSpec) -> float:
    return eta(spec.round_to_units(rnd), spec)


@dataclass(frozen=True)
class NetPresentCost:
    party: int
    chi: float


def npc(schedule: Schedule, party: int, spec: DiscountSpec) -> NetPresentCost:
    """Net present cost of participation: sum of (d - r) * eta over rounds."""
    chi = 0.0
    for e in schedule.party_events(party):
        value = e.amount * eta_at_round(e.round, spec)
        chi += value if e.kind is FlowKind.DEPOSIT else -value
    return NetPresentCost(party=party, chi=chi)


def npc_all(schedule: Schedule, spec: DiscountSpec) -> list[NetPresentCost]:
    return [npc(schedule, i, spec) for i in range(1, schedule.params.n + 1)]


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def ladder_closed_form(n: int, q: float, spec: DiscountSpec) -> list[float]:
    """Honest-run chi of every Ladder party.

    chi_i = q*eta(1) + (i-1)q*eta(n-i+2) - i*q*eta(n+i) for i < n and
    chi_n = (n-1)q*(eta(2) - eta(2n)).
    """
    if n < 2:
        raise ValueError("n >= 2")
    e = lambda rnd: eta_at_round(rnd, spec)
    chis = []
    for i in range(1, n):
        chis.append(q * e(1) + (i - 1) * q * e(n - i + 2) - i * q * e(n + i))
    chis.append((n - 1) * q * (e(2) - e(2 * n)))
    return chis


def multilock_closed_form(n: int, q: float, spec: DiscountSpec,
                          t: int = 2, s: int = 0) -> float:
    """Honest-party chi for Multi-Lock with s non-redeeming corrupted parties.

    chi = (n-1)q*eta(1) - (n-1)q*eta(t) - s*q*eta(t+1); identical for every
    honest party, which is the fairness statement itself.
    """
    if not 0 <= s <= n - 1:
        raise ValueError("0 <= s <= n-1")
    e = lambda rnd: eta_at_round(rnd, spec)
    return (n - 1) * q * e(1) - (n - 1) * q * e(t) - s * q * e(t + 1)


def ladder_trading_example(d: float = 10000.0, rate_bps: float = 238.0,
                           ) -> tuple[float, float]:
    """The 55-party dark-pool cost estimates computed literally.

    chi_1 uses a 1h->5h horizon and chi_55 a 2h->110h horizon at the minute
    rate; with d = 10000 the results read in basis points (about 0.11 for
    the first party).  The schedule-driven values for the same scenario are
    available through `ladder_closed_form`; the two disagree for the last
    party and both are reported by the CLI rather than reconciled.
    """
    dm = rescale_rate(annual_bps_to_continuous(rate_bps), "minute")
    chi_1 = d * (math.exp(-dm * 60) - math.exp(-dm * 5 * 60))
    chi_55 = 54 * d * (math.exp(-dm * 2 * 60) - math.exp(-dm * 110 * 60))
    return chi_1, chi_55


# ---------------------------------------------------------------------------
# Fairness verdicts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Verdict:
    fair: bool
    max_gap: float = 0.0
    max_gap_pair: Optional[tuple[int, int]] = None
    witness_pair: Optional[tuple[int, int]] = None
    witness_spec: Optional[DiscountSpec] = None
    per_party_chi: tuple[float, ...] = ()


def default_delta_grid(points: int = 50, minutes_per_round: float = 60.0,
                       ) -> list[DiscountSpec]:
    """Log-spaced annualized rates from 1 bps up to 100% per annum."""
    bps_values = np.logspace(0, 4, points)
    return [DiscountSpec.from_annual_bps(float(b), "minute", minutes_per_round)
            for b in bps_values]


def honest_parties(schedule: Schedule) -> list[int]:
    n = schedule.params.n
    ab = schedule.params.abort
    return [i for i in range(1, n + 1) if ab is None or i != ab.party]


def fairness_check(schedule: Schedule, specs: Sequence[DiscountSpec],
                   tol: float = 1e-9) -> Verdict:
    """Fair iff every honest pair's chi agrees (relative tol) on every spec.

    The reported witness pair is the first violating pair in lexicographic
    order (stable across runs); the maximizing pair and gap are reported
    separately for diagnostics.
    """
    honest = honest_parties(schedule)
    if len(honest) < 2:
        raise InsufficientParties("need at least two honest parties")
    max_gap = 0.0
    max_pair = None
    witness_pair = None
    witness_spec = None
    last_chis: tuple[float, ...] = ()
    for spec in specs:
        chis = {i: npc(schedule, i, spec).chi for i in honest}
        last_chis = tuple(chis[i] for i in honest)
        for a_idx in range(len(honest)):
            for b_idx in range(a_idx + 1, len(honest)):
                i, j = honest[a_idx], honest[b_idx]
                gap = abs(chis[i] - chis[j])
                if gap > max_gap:
                    max_gap = gap
                    max_pair = (i, j)
                if gap > tol * max(1.0, abs(chis[i])) and witness_pair is None:
                    witness_pair = (i, j)
                    witness_spec = spec
    if witness_pair is None:
        return Verdict(fair=True, max_gap=max_gap, max_gap_pair=max_pair,
                       per_party_chi=last_chis)
    return Verdict(fair=False, max_gap=max_gap, max_gap_pair=max_pair,
                   witness_pair=witness_pair, witness_spec=witness_spec,
                   per_party_chi=last_chis)


# ---------------------------------------------------------------------------
# Round-robin rotation analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RoundRobinAnalysis:
    pair: tuple[int, int]
    coefficients: tuple[int, ...]  # index = power of x = exp(-delta)
    fair_rate_count: int
    roots: tuple[float, ...] = ()

    @property
    def identically_zero(self) -> bool:
        return all(c == 0 for c in self.coefficients)


def _deposit_profile(schedule: Schedule, party: int) -> dict[int, int]:
    prof: dict[int, int] = {}
    for e in schedule.party_events(party):
        if e.kind is FlowKind.DEPOSIT:
            prof[e.round] = prof.get(e.round, 0) + e.amount
    return prof


def rotation_polynomial(schedule: Schedule, i: int, j: int, k: int,
                        ) -> list[int]:
    """Integer coefficients of the pairwise fairness polynomial in x=e^-delta.

    Rotation step rho shifts every party one role forward and lays the runs
    end to end (offset rho * tau), so the coefficient of x^(rho*tau + t) is
    the deposit difference between the roles played by parties i and j.
    Degree is at most k * tau.
    """
    n = schedule.params.n
    tau = schedule.total_rounds
    profiles = {p: _deposit_profile(schedule, p) for p in range(1, n + 1)}
    coeffs = [0] * (k * tau + 1)
    for rho in range(k):
        role_i = (i - 1 + rho) % n + 1
        role_j = (j - 1 + rho) % n + 1
        for rnd, amt in profiles[role_i].items():
            coeffs[rho * tau + rnd] += amt
        for rnd, amt in profiles[role_j].items():
            coeffs[rho * tau + rnd] -= amt
    return coeffs


def count_roots_in_unit_interval(coeffs: Sequence[int], grid: int = 100_000,
                                 refine_tol: float = 1e-12,
                                 ) -> tuple[int, list[float]]:
    """Distinct roots of the polynomial on the open interval (0, 1).

    Sign changes on a dense grid, refined by bisection.  Grid points that
    evaluate exactly to zero are counted once.
    """
    c = np.asarray(coeffs, dtype=float)[::-1]  # np.polyval wants high->low
    xs = np.linspace(0.0, 1.0, grid + 2)[1:-1]
    ys = np.polyval(c, xs)
    roots: list[float] = []
    exact = xs[ys == 0.0]
    roots.extend(float(x) for x in exact)
    sign = np.sign(ys)
    flips = np.nonzero((sign[:-1] * sign[1:]) < 0)[0]
    for idx in flips:
        lo, hi = float(xs[idx]), float(xs[idx + 1])
        flo = float(np.polyval(c, lo))
        while hi - lo > refine_tol:
            mid = 0.5 * (lo + hi)
            fmid = float(np.polyval(c, mid))
            if fmid == 0.0:
                lo = hi = mid
                break
            if (flo < 0) == (fmid < 0):
                lo, flo = mid, fmid
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    roots.sort()
    return len(roots), roots


def round_robin_analysis(schedule: Schedule, k: int,
                         ) -> dict[tuple[int, int], RoundRobinAnalysis]:
    """Rotation analysis for every pair (1, i); raises if all are zero."""
    if k < 1:
        raise ValueError("k >= 1")
    n = schedule.params.n
    out: dict[tuple[int, int], RoundRobinAnalysis] = {}
    any_nonzero = False
    for i in range(2, n + 1):
        coeffs = rotation_polynomial(schedule, 1, i, k)
        if any(coeffs):
            any_nonzero = True
            count, roots = count_roots_in_unit_interval(coeffs)
        else:
            count, roots = 0, []
        out[(1, i)] = RoundRobinAnalysis(
            pair=(1, i), coefficients=tuple(coeffs), fair_rate_count=count,
            roots=tuple(roots))
    if not any_nonzero:
        raise DegenerateFair(
            "all rotation polynomials are identically zero; the base "
            "protocol is fair at every rate")
    return out


def chi_gap_scan(schedule: Schedule, i: int, j: int, k: int,
                 grid: int = 100_000) -> int:
    """Independent oracle: zero crossings of the rotated-chi gap over x.

    Evaluates the deposit-only chi difference directly from the rotated
    event lists (no polynomial coefficients involved) on the same x grid
    used by the certified count.
    """
    n = schedule.params.n
    tau = schedule.total_rounds
    profiles = {p: _deposit_profile(schedule, p) for p in range(1, n + 1)}
    terms: list[tuple[int, int]] = []  # (absolute round, signed amount)
    for rho in range(k):
        role_i = (i - 1 + rho) % n + 1
        role_j = (j - 1 + rho) % n + 1
        for rnd, amt in profiles[role_i].items():
            terms.append((rho * tau + rnd, amt))
        for rnd, amt in profiles[role_j].items():
            terms.append((rho * tau + rnd, -amt))
    xs = np.linspace(0.0, 1.0, grid + 2)[1:-1]
    gap = np.zeros_like(xs)
    for rnd, amt in terms:
        gap += amt * xs ** rnd
    sign = np.sign(gap)
    zeros = int(np.count_nonzero(gap == 0.0))
    nz = sign[sign != 0]
    crossings = int(np.count_nonzero(nz[:-1] * nz[1:] < 0))
    return crossings + zeros


# ---------------------------------------------------------------------------
# Collateral game
# ---------------------------------------------------------------------------

FIRST_STRATEGIES = ("cooperate", "abort")
LAST_STRATEGIES = ("cooperate", "abort_if_unsatisfied")


@dataclass(frozen=True)
class CollateralGame:
    """Payoff table for the first and last mover of a staked computation.

    Stake buys participation, collateral is forfeited by whoever aborts,
    reward goes to the winner on completion.  The first mover's deposits are
    already secured by the time the last mover decides, so a completed run
    costs the first mover nothing when it loses, while the last mover
    completing a lost outcome forfeits its stake.
    """

    stake: float
    collateral: float
    reward: float
    last_wins: bool
    payoffs: dict[tuple[str, str], tuple[float, float]] = field(repr=False)

    def last_player_abort_strictly_dominates(self) -> bool:
        """Does aborting strictly beat cooperating for the last player
        in every profile where the last player's choice matters?"""
        relevant = [("cooperate", a) for a in LAST_STRATEGIES]
        coop = self.payoffs[relevant[0]][1]
        abort = self.payoffs[relevant[1]][1]
        return abort > coop


def collateral_game(stake: float, collateral: float, reward: float,
                    last_wins: bool) -> CollateralGame:
    """Enumerate the 2x2 strategy profiles for one realized outcome."""
    if collateral >= stake:
        raise InvalidParameters("collateral must be smaller than the stake")
    if stake >= reward:
        raise InvalidParameters("reward must exceed the stake")
    c, s, r = collateral, stake, reward
    win = r - s

    def completed() -> tuple[float, float]:
        # First mover's stake is already safe; last mover settles for real.
        return (0.0, win) if last_wins else (win, -s)

    payoffs: dict[tuple[str, str], tuple[float, float]] = {}
    for first in FIRST_STRATEGIES:
        for last in LAST_STRATEGIES:
            if first == "abort":
                payoffs[(first, last)] = (-c, c)
                continue
            last_aborts = last == "abort_if_unsatisfied" and not last_wins
            payoffs[(first, last)] = (c, -c) if last_aborts else completed()
    return CollateralGame(stake=stake, collateral=collateral, reward=reward,
                          last_wins=last_wins, payoffs=payoffs)


def nash_equilibrium(stake: float, collateral: float, reward: float,
                     ) -> tuple[str, str]:
    """Profile surviving best-response checks under both outcomes.

    Sweeping the outcome: the last player's conditional abort is a best
    response ex post in both states (strictly when it loses), and given
    that, the first player can only lose its collateral by aborting.
    """
    for profile in [(f, l) for f in FIRST_STRATEGIES for l in LAST_STRATEGIES]:
        ok = True
        for last_wins in (False, True):
            game = collateral_game(stake, collateral, reward, last_wins)
            mine = game.payoffs[profile]
            for alt in FIRST_STRATEGIES:
                if game.payoffs[(alt, profile[1])][0] > mine[0]:
                    ok = False
            for alt in LAST_STRATEGIES:
                if game.payoffs[(profile[0], alt)][1] > mine[1]:
                    ok = False
        if ok:
            return profile
    raise InvalidParameters("no pure equilibrium found")  # pragma: no cover


# ---------------------------------------------------------------------------
# Report plumbing
# ---------------------------------------------------------------------------

def fairness_report(protocol: ProtocolKind, n: int, stages: int = 1,
                    q: int = 10000, rate_bps: float = 238.0,
                    minutes_per_round: float = 60.0,
                    grid_points: int = 50) -> dict:
    """JSON-ready fairness report for one protocol configuration."""
    params = ScenarioParams(protocol=protocol, n=n, stages=stages, q=q)
    schedule = generate_schedule(params)
    specs = default_delta_grid(grid_points, minutes_per_round)
    verdict = fairness_check(schedule, specs)
    base = DiscountSpec.from_annual_bps(rate_bps, "minute", minutes_per_round)
    chis = [npc(schedule, i, base).chi for i in range(1, n + 1)]
    return {
        "protocol": protocol.token,
        "n": n,
        "stages": stages,
        "q": q,
        "discount": {
            "form": base.form,
            "delta": base.delta_per_unit,
            "unit": base.time_unit,
        },
        "per_party_chi": chis,
        "verdict": "Fair" if verdict.fair else "Unfair",
        "max_gap": verdict.max_gap,
        "witness_pair": list(verdict.witness_pair) if verdict.witness_pair else None,
    }
