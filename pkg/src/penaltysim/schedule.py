"""Deposit/refund schedule generation for penalty protocols.

Each protocol is rendered as an ordered list of signed coin movements
(``CashFlow``) in integer multiples of the penalty unit ``q``, on an abstract
integer round clock.  Honest execution and single-party abort scenarios are
supported.

The Ladder and Multi-Lock families follow their published structure directly.
For the multi-stage protocols (Locked Ladder, Planted Ladder) and the
Amortized Ladder only 4-party reference traces and 55-party aggregate numbers
are published; the generators below use reconstructed general-n rules that
reproduce both anchors exactly (see the per-generator docstrings and
README for the fitted formulas).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .errors import InvalidParty, UnsupportedScenario, UnsupportedStages


class ProtocolKind(Enum):
    """Roster of supported penalty protocols."""

    LADDER = "L"
    MULTI_LOCK = "ML"
    COMPACT_LADDER = "CL"
    COMPACT_MULTI_LOCK = "CML"
    INSURED_MPC = "IMPC"
    LOCKED_LADDER = "LL"
    PLANTED_LADDER = "PL"
    COMPACT_PLANTED_LADDER = "CPL"
    AMORTIZED_LADDER = "AL"

    @property
    def token(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "ProtocolKind":
        key = text.strip().lower().replace("_", "").replace("-", "")
        try:
            return _PROTOCOL_ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown protocol {text!r}") from None


_PROTOCOL_ALIASES = {
    "l": ProtocolKind.LADDER,
    "ladder": ProtocolKind.LADDER,
    "ml": ProtocolKind.MULTI_LOCK,
    "multilock": ProtocolKind.MULTI_LOCK,
    "cl": ProtocolKind.COMPACT_LADDER,
    "compactladder": ProtocolKind.COMPACT_LADDER,
    "cml": ProtocolKind.COMPACT_MULTI_LOCK,
    "compactmultilock": ProtocolKind.COMPACT_MULTI_LOCK,
    "impc": ProtocolKind.INSURED_MPC,
    "insuredmpc": ProtocolKind.INSURED_MPC,
    "ll": ProtocolKind.LOCKED_LADDER,
    "lockedladder": ProtocolKind.LOCKED_LADDER,
    "pl": ProtocolKind.PLANTED_LADDER,
    "plantedladder": ProtocolKind.PLANTED_LADDER,
    "cpl": ProtocolKind.COMPACT_PLANTED_LADDER,
    "compactplantedladder": ProtocolKind.COMPACT_PLANTED_LADDER,
    "al": ProtocolKind.AMORTIZED_LADDER,
    "amortizedladder": ProtocolKind.AMORTIZED_LADDER,
}

# Protocols whose stage parameter is meaningful beyond r=1.  For the
# Amortized Ladder, `stages` counts parallel amortized executions sharing
# one lock round (the published 4-party trace corresponds to stages=2).
MULTI_STAGE = frozenset({
    ProtocolKind.LOCKED_LADDER,
    ProtocolKind.PLANTED_LADDER,
    ProtocolKind.COMPACT_PLANTED_LADDER,
    ProtocolKind.AMORTIZED_LADDER,
})

# Protocols that share the Multi-Lock schedule (timing and amounts).
MULTI_LOCK_FAMILY = frozenset({
    ProtocolKind.MULTI_LOCK,
    ProtocolKind.COMPACT_MULTI_LOCK,
    ProtocolKind.INSURED_MPC,
})

LADDER_FAMILY = frozenset({ProtocolKind.LADDER, ProtocolKind.COMPACT_LADDER})


class FlowKind(Enum):
    DEPOSIT = "deposit"
    REFUND = "refund"


@dataclass(frozen=True)
class CashFlow:
    """One signed coin movement: `amount` coins (a multiple of q)."""

    party: int
    round: int
    amount: int
    kind: FlowKind

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError("cash flow amounts must be positive")
        if self.round < 0:
            raise ValueError("rounds are non-negative")


@dataclass(frozen=True)
class AbortSpec:
    """Party `party` stops participating at every round >= `round`."""

    party: int
    round: int


@dataclass(frozen=True)
class ScenarioParams:
    protocol: ProtocolKind
    n: int
    stages: int = 1
    q: int = 1
    abort: Optional[AbortSpec] = None

    def __post_init__(self):
        if self.n < 2:
            raise InvalidParty(f"need at least 2 parties, got {self.n}")
        if self.q <= 0:
            raise ValueError("penalty unit q must be positive")
        if self.stages < 1:
            raise UnsupportedStages("stages must be >= 1")
        if self.stages > 1 and self.protocol not in MULTI_STAGE:
            raise UnsupportedStages(
                f"{self.protocol.token} supports a single stage only")
        if self.abort is not None:
            if not 1 <= self.abort.party <= self.n:
                raise InvalidParty(
                    f"abort party {self.abort.party} not in [1, {self.n}]")


@dataclass
class Schedule:
    params: ScenarioParams
    events: list[CashFlow] = field(default_factory=list)
    total_rounds: int = 0

    def party_events(self, party: int) -> list[CashFlow]:
        self._check_party(party)
        return [e for e in self.events if e.party == party]

    def _check_party(self, party: int) -> None:
        if not 1 <= party <= self.params.n:
            raise InvalidParty(f"party {party} not in [1, {self.params.n}]")


def _iround(x: float) -> int:
    """Round half up; keeps the reconstructed interpolations deterministic."""
    return int(math.floor(x + 0.5))


def _sorted_events(events: Iterable[CashFlow]) -> list[CashFlow]:
    return sorted(
        events,
        key=lambda e: (e.round, e.party, e.kind is FlowKind.REFUND, e.amount),
    )


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def generate_schedule(params: ScenarioParams) -> Schedule:
    """Full event list for one protocol run (honest or aborted)."""
    kind = params.protocol
    if kind in LADDER_FAMILY:
        events, total = _ladder(params)
    elif kind in MULTI_LOCK_FAMILY:
        events, total = _multi_lock(params)
    elif kind is ProtocolKind.AMORTIZED_LADDER:
        events, total = _amortized_ladder(params)
    elif kind in (ProtocolKind.LOCKED_LADDER,):
        events, total = _locked_ladder(params)
    else:  # PL and CPL share one generator; compactness changes scripts only
        events, total = _planted_ladder(params)
    return Schedule(params=params, events=_sorted_events(events), total_rounds=total)


def apply_abort(params: ScenarioParams) -> Schedule:
    """Schedule for an abort scenario; `params.abort` must be set."""
    if params.abort is None:
        raise ValueError("apply_abort needs params.abort")
    return generate_schedule(params)


def _ladder(params: ScenarioParams) -> tuple[list[CashFlow], int]:
    """Ladder (and Compact Ladder, which differs in script size only).

    Honest run, n parties: parties 1..n-1 each place a roof deposit of q at
    round 1; party i places its ladder deposit of (i-1)q at round n-i+2
    (so P_n moves first, at round 2); claims run in reverse order, party i
    collecting i*q at round n+i; P_n finally collects the n-1 roof deposits,
    (n-1)q, at round 2n.
    """
    n, q = params.n, params.q
    abort = params.abort
    p = abort.party if abort else 0
    t_stop = abort.round if abort else math.inf

    def acts(party: int, rnd: int) -> bool:
        return party != p or rnd < t_stop

    dep: list[CashFlow] = []
    ref: list[CashFlow] = []

    # Roof deposits (round 1).
    roof_made = [False] * (n + 1)
    for j in range(1, n):
        if acts(j, 1):
            roof_made[j] = True
            dep.append(CashFlow(j, 1, q, FlowKind.DEPOSIT))
    roof_complete = all(roof_made[1:n])

    # Ladder deposits, rounds 2..n, P_n down to P_2.  The chain stops at the
    # first missing deposit; parties below never move.
    ladder_made = [False] * (n + 1)
    chain_alive = roof_complete
    for i in range(n, 1, -1):
        rnd = n - i + 2
        if chain_alive and acts(i, rnd):
            ladder_made[i] = True
            dep.append(CashFlow(i, rnd, (i - 1) * q, FlowKind.DEPOSIT))
        else:
            chain_alive = False

    # Claims, rounds n+1..2n-1.  Party j's claim consumes P_{j+1}'s ladder
    # deposit and needs every earlier claim (witness availability).
    claimed = [False] * (n + 1)
    prior_ok = chain_alive
    for j in range(1, n):
        rnd = n + j
        if prior_ok and ladder_made[j + 1] and acts(j, rnd):
            claimed[j] = True
            ref.append(CashFlow(j, rnd, j * q, FlowKind.REFUND))
        else:
            prior_ok = False

    # Roof claim by P_n at round 2n (aggregated over the n-1 roof deposits).
    roof_claimed = False
    if prior_ok and roof_complete and acts(n, 2 * n):
        roof_claimed = True
        ref.append(CashFlow(n, 2 * n, (n - 1) * q, FlowKind.REFUND))

    # Timeout refunds.  An unclaimed ladder deposit of P_k returns at round
    # n+k; unclaimed roof deposits return q each at round 2n+1.
    for k in range(2, n + 1):
        if ladder_made[k] and not claimed[k - 1]:
            ref.append(CashFlow(k, n + k, (k - 1) * q, FlowKind.REFUND))
    if not roof_claimed:
        for j in range(1, n):
            if roof_made[j]:
                ref.append(CashFlow(j, 2 * n + 1, q, FlowKind.REFUND))

    events = dep + ref
    total = max((e.round for e in events), default=0)
    return events, total


def _multi_lock(params: ScenarioParams) -> tuple[list[CashFlow], int]:
    """Multi-Lock (also CML and Insured MPC): symmetric single-round lock.

    Every party deposits (n-1)q at round 1 and redeems it at round 2.  If a
    party aborts at the lock phase the whole lock unwinds with full refunds;
    if it aborts at the redeem phase its deposit is split q per honest party
    in the compensation phase at round 3 (= timeout + 1).
    """
    n, q = params.n, params.q
    d = (n - 1) * q
    abort = params.abort
    p = abort.party if abort else 0
    t_stop = abort.round if abort else math.inf

    events: list[CashFlow] = []
    if p and t_stop <= 1:
        # Lock never completes: everyone who locked is refunded.
        for i in range(1, n + 1):
            if i != p:
                events.append(CashFlow(i, 1, d, FlowKind.DEPOSIT))
                events.append(CashFlow(i, 2, d, FlowKind.REFUND))
        return events, 2

    for i in range(1, n + 1):
        events.append(CashFlow(i, 1, d, FlowKind.DEPOSIT))
    aborted_redeem = p and t_stop <= 2
    for i in range(1, n + 1):
        if not (aborted_redeem and i == p):
            events.append(CashFlow(i, 2, d, FlowKind.REFUND))
    if aborted_redeem:
        # Compensation phase: the withheld deposit splits d/(n-1) = q each.
        for j in range(1, n + 1):
            if j != p:
                events.append(CashFlow(j, 3, q, FlowKind.REFUND))
        return events, 3
    return events, 2


def _al_amount(n: int, i: int) -> int:
    """Per-execution deposit of party i: n*q for P_1 up to 2(n-1)q for P_n.

    Endpoints are published; intermediate parties interpolate linearly
    (reconstruction, documented in README).
    """
    return _iround(n + (i - 1) * (n - 2) / (n - 1))


def _amortized_ladder(params: ScenarioParams) -> tuple[list[CashFlow], int]:
    """Amortized Ladder: `stages` executions share one single-round lock."""
    if params.abort is not None:
        raise UnsupportedScenario(
            "abort semantics are modeled for the Ladder and Multi-Lock "
            "families only")
    n, q, k = params.n, params.q, params.stages
    events = []
    for i in range(1, n + 1):
        amount = k * _al_amount(n, i) * q
        events.append(CashFlow(i, 1, amount, FlowKind.DEPOSIT))
        events.append(CashFlow(i, 2, amount, FlowKind.REFUND))
    return events, 2


def _locked_ladder(params: ScenarioParams) -> tuple[list[CashFlow], int]:
    """Locked Ladder, r stages.

    Reconstruction anchored at the published 4-party 2-stage trace and the
    55-party aggregates.  Stage s occupies a block of B = 3n-2 rounds; after
    the last block the stages unwind in reverse order, each unwind window
    spanning 2n rounds (2n-1 for the final one).  Per stage, party 1 deposits
    q at the block start and (n-1)q at its end; party i>1 deposits q early,
    its (n-1)q rung at an i-interpolated round, and the interpolated
    remainder split over two fixed rounds.  Totals per party over two stages:
    2n*q for P_1 rising to 4(n-1)q for P_n; total duration 10n-5 with a
    maximum lock window of 10n-7 rounds, both matching the published data.
    """
    if params.abort is not None:
        raise UnsupportedScenario(
            "abort semantics are modeled for the Ladder and Multi-Lock "
            "families only")
    n, q, r = params.n, params.q, params.stages
    B = 3 * n - 2
    events: list[CashFlow] = []

    def per_stage_total(i: int) -> int:
        return _iround(n + (i - 1) * (n - 2) / (n - 1))

    for s in range(r):
        base = s * B
        events.append(CashFlow(1, base + 1, q, FlowKind.DEPOSIT))
        events.append(CashFlow(1, base + B, (n - 1) * q, FlowKind.DEPOSIT))
        for i in range(2, n + 1):
            rem = per_stage_total(i) - n
            t_big = _iround(B - (i - 1) * (B - 3) / (n - 1))
            events.append(CashFlow(i, base + 2, q, FlowKind.DEPOSIT))
            events.append(
                CashFlow(i, base + t_big, (n - 1) * q, FlowKind.DEPOSIT))
            hi, lo = -(-rem // 2), rem // 2
            if hi:
                events.append(
                    CashFlow(i, base + n + 1, hi * q, FlowKind.DEPOSIT))
            if lo:
                events.append(
                    CashFlow(i, base + 3 * n - 3, lo * q, FlowKind.DEPOSIT))

    for u in range(r):  # u = 0 unwinds the last stage first
        w = r * B + u * 2 * n
        last = u == r - 1
        events.append(CashFlow(1, w + 1, (n - 1) * q, FlowKind.REFUND))
        events.append(CashFlow(1, w + (2 if last else 3), q, FlowKind.REFUND))
        for i in range(2, n + 1):
            rem = per_stage_total(i) - n
            hi, lo = -(-rem // 2), rem // 2
            shift = 1 if last else 0
            if lo:
                events.append(
                    CashFlow(i, w + 2 - shift, lo * q, FlowKind.REFUND))
            if hi:
                events.append(
                    CashFlow(i, w + 4 - shift, hi * q, FlowKind.REFUND))
            events.append(
                CashFlow(i, w + 2 * n - 2 - shift, q, FlowKind.REFUND))
            span = 2 * n - 2 if last else 2 * n - 1
            o_big = _iround(1 + (i - 1) * span / (n - 1))
            events.append(
                CashFlow(i, w + o_big, (n - 1) * q, FlowKind.REFUND))

    total = r * B + 2 * r * n - 1
    return events, total


def _planted_ladder(params: ScenarioParams) -> tuple[list[CashFlow], int]:
    """Planted Ladder (and its compact variant), r stages.

    Reconstruction anchored at the published 4-party 2-stage trace and the
    55-party aggregates.  The run is r+1 deposit waves followed by r+1 refund
    waves, each wave n rounds wide.  Party 1 acts at wave offset 1, everyone
    else at offset 2; refunds of party i land at offset i of each refund
    wave.  Wave amounts interpolate between the published endpoint series
    (P_1: n-1, 2n, 4 / P_n: 3n-1, 2n-1, n-1 for r=2), the last wave taking
    the remainder so per-party totals are exact: (3n+3)q for P_1 up to
    (6n-3)q for P_n at r=2.  Duration 2(r+1)n rounds, maximum lock window
    2(r+1)n - 2 (= 328 rounds at n=55, r=2).
    """
    if params.abort is not None:
        raise UnsupportedScenario(
            "abort semantics are modeled for the Ladder and Multi-Lock "
            "families only")
    n, q, r = params.n, params.q, params.stages
    waves = r + 1
    t1 = (n - 1) + 2 * n * (r - 1) + 4
    tn = (3 * n - 1) + (2 * n - 1) * (r - 1) + (n - 1)

    def total_of(i: int) -> int:
        if i == 1:
            return t1
        if i == n:
            return tn
        return _iround(t1 + (i - 1) * (tn - t1) / (n - 1))

    events: list[CashFlow] = []
    for i in range(1, n + 1):
        total_i = total_of(i)
        d0 = (n - 1) if i == 1 else _iround((n - 1) + (i - 1) * 2 * n / (n - 1))
        mids = [
            2 * n if i == 1 else _iround(2 * n - (i - 1) / (n - 1))
            for _ in range(r - 1)
        ]
        d_last = total_i - d0 - sum(mids)
        amounts = [d0, *mids, d_last]
        dep_offset = 1 if i == 1 else 2
        for w in range(waves):
            if amounts[w]:
                events.append(CashFlow(
                    i, w * n + dep_offset, amounts[w] * q, FlowKind.DEPOSIT))

        r0 = i
        r_mids = [n + i] * (r - 1)
        r_last = total_i - r0 - sum(r_mids)
        refunds = [r0, *r_mids, r_last]
        for w in range(waves):
            if refunds[w]:
                events.append(CashFlow(
                    i, waves * n + w * n + i, refunds[w] * q, FlowKind.REFUND))

    return events, 2 * waves * n


# ---------------------------------------------------------------------------
# Schedule queries
# ---------------------------------------------------------------------------

def balance_trace(schedule: Schedule, party: int) -> list[tuple[int, int]]:
    """Per-round locked-coin balance, from round 0 to the party's last event.

    Deposits push the balance negative; an honest run returns to 0.
    """
    events = schedule.party_events(party)
    if not events:
        return [(0, 0)]
    last = max(e.round for e in events)
    delta = [0] * (last + 1)
    for e in events:
        delta[e.round] += -e.amount if e.kind is FlowKind.DEPOSIT else e.amount
    trace = []
    bal = 0
    for rnd in range(last + 1):
        bal += delta[rnd]
        trace.append((rnd, bal))
    return trace


def total_deposit(schedule: Schedule, party: int) -> int:
    """Sum of all deposits of one party, in coins (a multiple of q)."""
    return sum(e.amount for e in schedule.party_events(party)
               if e.kind is FlowKind.DEPOSIT)


def total_refund(schedule: Schedule, party: int) -> int:
    return sum(e.amount for e in schedule.party_events(party)
               if e.kind is FlowKind.REFUND)


def net_gain(schedule: Schedule, party: int) -> int:
    """Refunds minus deposits; 0 on an honest run."""
    return total_refund(schedule, party) - total_deposit(schedule, party)


def max_lock_window(schedule: Schedule, party: int) -> int:
    """Rounds between the party's first deposit and its last refund."""
    events = schedule.party_events(party)
    deps = [e.round for e in events if e.kind is FlowKind.DEPOSIT]
    refs = [e.round for e in events if e.kind is FlowKind.REFUND]
    if not deps or not refs:
        return 0
    return max(0, max(refs) - min(deps))


def conservation_ok(schedule: Schedule) -> bool:
    """Round-by-round check that refunds never outrun deposits."""
    flows: dict[int, int] = {}
    for e in schedule.events:
        sign = 1 if e.kind is FlowKind.DEPOSIT else -1
        flows[e.round] = flows.get(e.round, 0) + sign * e.amount
    pool = 0
    for rnd in sorted(flows):
        pool += flows[rnd]
        if pool < 0:
            return False
    return True


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

CSV_HEADER = "protocol,n,stages,party,round,kind,amount_q"


def schedule_to_csv(schedule: Schedule) -> str:
    """Render the deterministic CSV form (header + one row per event)."""
    p = schedule.params
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for e in _sorted_events(schedule.events):
        kind = "deposit" if e.kind is FlowKind.DEPOSIT else "refund"
        buf.write(f"{p.protocol.token},{p.n},{p.stages},{e.party},"
                  f"{e.round},{kind},{e.amount // p.q}\n")
    return buf.getvalue()
