"""Executable escrow state machines with a round clock and coin ledger.

Three machines share one ledger: the generic escrow bookkeeping itself (the
ledger, which refuses to create coins), claim-or-refund sessions (a sender
conditionally pays a receiver who must present a satisfying witness before a
timeout), and multi-lock sessions (n parties atomically lock equal deposits,
redeem them by revealing witnesses, and split any unredeemed deposit evenly
among the others after the timeout).

A ledger with its sessions is single-owner mutable state; the clock advances
only through `tick` so every run is deterministically replayable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .errors import (
    AlreadyRedeemed,
    BadWitness,
    DuplicateDeposit,
    Expired,
    InvariantViolation,
    MismatchedTerms,
    NotYetRefundable,
)
from .schedule import (
    CashFlow,
    FlowKind,
    ScenarioParams,
    Schedule,
    _sorted_events,
)

Predicate = Callable[[bytes], bool]


class Clock:
    """Round counter; advances only by +1."""

    def __init__(self, start: int = 0):
        self.round = start

    def tick(self) -> int:
        self.round += 1
        return self.round


@dataclass
class Transition:
    round: int
    session: str
    kind: str
    party: int
    amount: int
    new_state: str

    def to_json(self) -> str:
        return json.dumps({
            "round": self.round, "session": self.session, "kind": self.kind,
            "party": self.party, "amount": self.amount,
            "new_state": self.new_state,
        }, sort_keys=True)


class Ledger:
    """Per-party wallets plus the escrow pool, with conservation checks.

    Every deposit moves coins wallet -> pool, every refund pool -> wallet;
    the pool can never go negative (no coin creation) and wallets cannot
    overdraw.
    """

    def __init__(self, wallets: dict[int, int]):
        if any(v < 0 for v in wallets.values()):
            raise ValueError("wallet balances must be non-negative")
        self.wallets = dict(wallets)
        self.initial = dict(wallets)
        self.pool = 0
        self.events: list[CashFlow] = []
        self.log: list[Transition] = []

    def deposit(self, party: int, amount: int, rnd: int, session: str = "",
                state: str = "") -> None:
        if amount <= 0:
            raise ValueError("amounts are positive")
        if self.wallets.get(party, 0) < amount:
            raise InvariantViolation(
                f"party {party} cannot deposit {amount}: wallet "
                f"{self.wallets.get(party, 0)}")
        self.wallets[party] -= amount
        self.pool += amount
        self.events.append(CashFlow(party, rnd, amount, FlowKind.DEPOSIT))
        self.log.append(Transition(rnd, session, "deposit", party, amount, state))

    def payout(self, party: int, amount: int, rnd: int, session: str = "",
               state: str = "") -> None:
        if amount <= 0:
            raise ValueError("amounts are positive")
        if self.pool < amount:
            raise InvariantViolation(
                f"refund of {amount} exceeds escrow pool {self.pool}")
        self.pool -= amount
        self.wallets[party] = self.wallets.get(party, 0) + amount
        self.events.append(CashFlow(party, rnd, amount, FlowKind.REFUND))
        self.log.append(Transition(rnd, session, "refund", party, amount, state))

    def balance(self, party: int) -> int:
        return self.wallets.get(party, 0)

    def net_change(self, party: int) -> int:
        return self.wallets.get(party, 0) - self.initial.get(party, 0)

    def trace_jsonl(self) -> str:
        return "\n".join(t.to_json() for t in self.log)


@dataclass(frozen=True)
class LedgerCheck:
    ok: bool
    first_bad_round: Optional[int] = None
    detail: str = ""


def ledger_invariant_check(events: list[CashFlow]) -> LedgerCheck:
    """Round-by-round no-coin-creation check over an event log."""
    per_round: dict[int, int] = {}
    for e in events:
        sign = 1 if e.kind is FlowKind.DEPOSIT else -1
        per_round[e.round] = per_round.get(e.round, 0) + sign * e.amount
    pool = 0
    for rnd in sorted(per_round):
        pool += per_round[rnd]
        if pool < 0:
            return LedgerCheck(
                ok=False, first_bad_round=rnd,
                detail=f"refunds exceed deposits by {-pool} at round {rnd}")
    return LedgerCheck(ok=True)


# ---------------------------------------------------------------------------
# Claim-or-refund
# ---------------------------------------------------------------------------

class CrState(Enum):
    DEPOSITED = "deposited"
    CLAIMED = "claimed"
    REFUNDED = "refunded"


@dataclass
class CrSession:
    sid: str
    sender: int
    receiver: int
    predicate: Predicate
    timeout: int
    amount: int
    state: CrState = CrState.DEPOSITED


class EscrowHub:
    """One ledger, one clock, any number of CR and ML sessions."""

    def __init__(self, ledger: Ledger, clock: Optional[Clock] = None):
        self.ledger = ledger
        self.clock = clock or Clock()
        self.cr_sessions: dict[str, CrSession] = {}
        self.ml_sessions: dict[str, "MlSession"] = {}

    # -- claim-or-refund ----------------------------------------------

    def cr_deposit(self, sid: str, sender: int, receiver: int,
                   predicate: Predicate, timeout: int, amount: int) -> str:
        key = f"{sid}:{sender}->{receiver}"
        if key in self.cr_sessions:
            raise DuplicateDeposit(key)
        session = CrSession(key, sender, receiver, predicate, timeout, amount)
        self.ledger.deposit(sender, amount, self.clock.round, key,
                            CrState.DEPOSITED.value)
        self.cr_sessions[key] = session
        return key

    def cr_claim(self, key: str, witness: bytes) -> int:
        session = self.cr_sessions[key]
        if self.clock.round > session.timeout:
            raise Expired(f"{key} timed out at {session.timeout}")
        if session.state is not CrState.DEPOSITED:
            raise DuplicateDeposit(f"{key} already {session.state.value}")
        if not session.predicate(witness):
            raise BadWitness(key)
        session.state = CrState.CLAIMED
        self.ledger.payout(session.receiver, session.amount, self.clock.round,
                           key, CrState.CLAIMED.value)
        return session.amount

    def cr_refund(self, key: str) -> int:
        """Explicit refund request; only valid once the timeout has passed."""
        session = self.cr_sessions[key]
        if session.state is not CrState.DEPOSITED:
            raise DuplicateDeposit(f"{key} already {session.state.value}")
        if self.clock.round <= session.timeout:
            raise NotYetRefundable(key)
        session.state = CrState.REFUNDED
        self.ledger.payout(session.sender, session.amount, self.clock.round,
                           key, CrState.REFUNDED.value)
        return session.amount

    # -- shared clock ---------------------------------------------------

    def tick(self) -> int:
        """Advance the round; expiring sessions settle automatically."""
        rnd = self.clock.tick()
        for session in self.cr_sessions.values():
            if (session.state is CrState.DEPOSITED
                    and rnd == session.timeout + 1):
                session.state = CrState.REFUNDED
                self.ledger.payout(session.sender, session.amount, rnd,
                                   session.sid, CrState.REFUNDED.value)
        for ml in self.ml_sessions.values():
            ml._on_tick(rnd)
        return rnd

    # -- multi-lock -------------------------------------------------------

    def ml_open(self, sid: str, n: int) -> "MlSession":
        if sid in self.ml_sessions:
            raise DuplicateDeposit(sid)
        session = MlSession(self, sid, n)
        self.ml_sessions[sid] = session
        return session


class MlPartyState(Enum):
    UNLOCKED = "unlocked"
    PENDING = "pending"
    LOCKED = "locked"
    REDEEMED = "redeemed"
    COMPENSATED = "compensated"


@dataclass(frozen=True)
class MlTerms:
    """The agreed tuple: deposit amount, per-party predicates, timeout."""

    amount: int
    predicates: tuple[Predicate, ...]
    timeout: int


class MlSession:
    """Atomic n-party lock/redeem/compensate session."""

    def __init__(self, hub: EscrowHub, sid: str, n: int):
        self.hub = hub
        self.sid = sid
        self.n = n
        self.terms: dict[int, MlTerms] = {}
        self.state: dict[int, MlPartyState] = {
            i: MlPartyState.UNLOCKED for i in range(1, n + 1)}
        self.finalized: Optional[bool] = None  # None until finalize()
        self.revealed: dict[int, bytes] = {}

    def lock(self, party: int, terms: MlTerms) -> None:
        if not 1 <= party <= self.n:
            raise ValueError(f"party {party} out of range")
        if self.state[party] is not MlPartyState.UNLOCKED:
            raise DuplicateDeposit(f"{self.sid}: {party} already locked")
        if self.finalized is not None:
            raise MismatchedTerms(f"{self.sid}: lock phase is over")
        self.hub.ledger.deposit(party, terms.amount, self.hub.clock.round,
                                self.sid, MlPartyState.PENDING.value)
        self.terms[party] = terms
        self.state[party] = MlPartyState.PENDING

    def finalize(self) -> bool:
        """Close the lock phase: all-locked on agreement, else full refunds.

        Returns True when every party locked identical terms; on any
        mismatch or missing lock, every pending deposit is returned and the
        session terminates (atomicity: all parties reach Locked or none do).
        """
        if self.finalized is not None:
            raise MismatchedTerms(f"{self.sid}: already finalized")
        values = list(self.terms.values())
        agreed = (len(values) == self.n
                  and all(v == values[0] for v in values[1:]))
        if agreed:
            for i in self.state:
                self.state[i] = MlPartyState.LOCKED
            self.finalized = True
            return True
        rnd = self.hub.clock.round
        for i, terms in self.terms.items():
            self.state[i] = MlPartyState.UNLOCKED
            self.hub.ledger.payout(i, terms.amount, rnd, self.sid,
                                   MlPartyState.UNLOCKED.value)
        self.finalized = False
        return False

    @property
    def timeout(self) -> int:
        return next(iter(self.terms.values())).timeout

    def redeem(self, party: int, witness: bytes) -> int:
        if self.finalized is not True:
            raise MismatchedTerms(f"{self.sid}: session is not locked")
        state = self.state[party]
        if state is MlPartyState.REDEEMED:
            raise AlreadyRedeemed(f"{self.sid}: {party}")
        if state is not MlPartyState.LOCKED:
            raise MismatchedTerms(f"{self.sid}: {party} is {state.value}")
        terms = self.terms[party]
        if self.hub.clock.round > terms.timeout:
            raise Expired(f"{self.sid}: past timeout {terms.timeout}")
        if not terms.predicates[party - 1](witness):
            raise BadWitness(f"{self.sid}: party {party}")
        self.state[party] = MlPartyState.REDEEMED
        self.revealed[party] = witness
        self.hub.ledger.payout(party, terms.amount, self.hub.clock.round,
                               self.sid, MlPartyState.REDEEMED.value)
        return terms.amount

    def _on_tick(self, rnd: int) -> None:
        if self.finalized is not True:
            return
        if rnd != self.timeout + 1:
            return
        for i in range(1, self.n + 1):
            if self.state[i] is MlPartyState.LOCKED:
                terms = self.terms[i]
                share, remainder = divmod(terms.amount, self.n - 1)
                if remainder:
                    raise InvariantViolation(
                        f"{self.sid}: deposit {terms.amount} does not split "
                        f"evenly over {self.n - 1} parties")
                self.state[i] = MlPartyState.COMPENSATED
                for j in range(1, self.n + 1):
                    if j != i:
                        self.hub.ledger.payout(
                            j, share, rnd, self.sid,
                            MlPartyState.COMPENSATED.value)


# ---------------------------------------------------------------------------
# Ladder replayed over claim-or-refund sessions
# ---------------------------------------------------------------------------

def ladder_wallets(n: int, q: int = 1) -> dict[int, int]:
    """Entry requirement per party: roof q plus the ladder rung (i-1)q."""
    wallets = {i: i * q for i in range(1, n)}
    wallets[n] = (n - 1) * q
    return wallets


def replay_ladder_over_cr(n: int, q: int = 1,
                          abort_party: Optional[int] = None) -> Ledger:
    """Drive 2(n-1) claim-or-refund sessions through an honest Ladder run.

    Roof sessions send q from each P_j (j < n) to P_n with timeout 2n;
    rung sessions send (i-1)q from P_i to P_{i-1} with timeout n+i-1.
    Claims run in reverse order at rounds n+1..2n.  With `abort_party` set,
    that party never claims and the timeouts settle everything else.
    """
    hub = EscrowHub(Ledger(ladder_wallets(n, q)))
    secrets = {i: f"secret-{i}".encode() for i in range(1, n + 1)}

    def needs(upto: int) -> Predicate:
        want = b"|".join(secrets[j] for j in range(1, upto + 1))
        return lambda w: w == want

    hub.tick()  # round 1: roof deposits
    for j in range(1, n):
        hub.cr_deposit(f"roof{j}", j, n, needs(n), 2 * n, q)
    rung_keys = {}
    for i in range(n, 1, -1):  # rounds 2..n: rung deposits
        hub.tick()
        rung_keys[i] = hub.cr_deposit(
            f"rung{i}", i, i - 1, needs(i - 1), n + i - 1, (i - 1) * q)

    revealed = True
    for j in range(1, n):  # rounds n+1..2n-1: claims in reverse order
        hub.tick()
        if revealed and j != abort_party:
            hub.cr_claim(rung_keys[j + 1],
                         b"|".join(secrets[x] for x in range(1, j + 1)))
        else:
            revealed = False
    hub.tick()  # round 2n: the roof claims
    if revealed and n != abort_party:
        for j in range(1, n):
            hub.cr_claim(f"roof{j}:{j}->{n}",
                         b"|".join(secrets[x] for x in range(1, n + 1)))
    hub.tick()  # round 2n+1: timeouts settle anything left
    return hub.ledger


def ledger_schedule(ledger: Ledger, params: ScenarioParams) -> Schedule:
    """Package a ledger's event log as a Schedule (events aggregated by
    round/party/kind so functionality-level and protocol-level logs align)."""
    merged: dict[tuple[int, int, FlowKind], int] = {}
    for e in ledger.events:
        key = (e.round, e.party, e.kind)
        merged[key] = merged.get(key, 0) + e.amount
    events = [CashFlow(party, rnd, amount, kind)
              for (rnd, party, kind), amount in merged.items()]
    total = max((e.round for e in events), default=0)
    return Schedule(params=params, events=_sorted_events(events),
                    total_rounds=total)
