"""Reference execution of the Compact Multi-Lock penalty protocol.

The unfair pre-computation that derives key shares, commitments and the
output ciphertext is played by a trusted dealer (the protocol treats it as
an ideal sub-functionality, and a real garbled-circuit engine would add
nothing to the behavior under test).  Fair reconstruction then runs over
the multi-lock escrow session: each party locks (n-1)q, redeems by opening
its share commitment before the timeout, and unredeemed deposits are split
q per head in the compensation round.

Instantiations, desk scale: n-of-n XOR sharing; commitment = SHA-256 over
share plus 256-bit randomness (collision-resistant binding); encryption =
SHA-256 counter-mode keystream.  A run is deterministic under a fixed seed.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

from .errors import BadWitness, LengthMismatch, WrongShareCount
from .escrow import EscrowHub, Ledger, MlTerms, ledger_schedule
from .schedule import ProtocolKind, ScenarioParams, Schedule

KEY_BITS = 80          # secret-key / share length (the security parameter)
COMMIT_RAND_BYTES = 32

KEY_BYTES = KEY_BITS // 8


def share(key: bytes, n: int, rng: random.Random) -> list[bytes]:
    """n-of-n XOR sharing; any n-1 shares are uniform and key-independent."""
    if n < 2:
        raise WrongShareCount("need at least 2 shares")
    shares = [rng.randbytes(len(key)) for _ in range(n - 1)]
    last = bytes(b ^ x for b, x in zip(key, _xor_all(shares, len(key))))
    shares.append(last)
    return shares


def recon(shares: Sequence[bytes]) -> bytes:
    if not shares:
        raise WrongShareCount("no shares")
    length = len(shares[0])
    if any(len(s) != length for s in shares):
        raise WrongShareCount("shares have inconsistent lengths")
    return _xor_all(shares, length)


def _xor_all(parts: Sequence[bytes], length: int) -> bytes:
    acc = bytearray(length)
    for p in parts:
        for i, b in enumerate(p):
            acc[i] ^= b
    return bytes(acc)


def commit(share_bits: bytes, randomness: bytes) -> bytes:
    return hashlib.sha256(share_bits + randomness).digest()


def commit_verify(digest: bytes, share_bits: bytes, randomness: bytes) -> bool:
    return commit(share_bits, randomness) == digest


def _keystream(key: bytes, length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out.extend(hashlib.sha256(key + counter.to_bytes(8, "big")).digest())
        counter += 1
    return bytes(out[:length])


def enc(key: bytes, plaintext: bytes) -> bytes:
    return bytes(a ^ b for a, b in zip(plaintext,
                                       _keystream(key, len(plaintext))))


def dec(key: bytes, ciphertext: bytes) -> bytes:
    return enc(key, ciphertext)


@dataclass(frozen=True)
class PartyBundle:
    """What the dealer hands party i: all commitments, the ciphertext, and
    only its own share opening."""

    party: int
    commitments: tuple[bytes, ...]
    ciphertext: bytes
    share: bytes
    opening: bytes


def dealer_eval(inputs: Sequence[bytes], f: Callable[..., bytes],
                rng: random.Random) -> list[PartyBundle]:
    """Trusted-dealer stand-in for the derived-function pre-computation."""
    n = len(inputs)
    key = rng.randbytes(KEY_BYTES)
    shares = share(key, n, rng)
    openings = [rng.randbytes(COMMIT_RAND_BYTES) for _ in range(n)]
    commitments = tuple(commit(s, a) for s, a in zip(shares, openings))
    ciphertext = enc(key, f(*inputs))
    return [
        PartyBundle(party=i + 1, commitments=commitments,
                    ciphertext=ciphertext, share=shares[i],
                    opening=openings[i])
        for i in range(n)
    ]


class Behavior(Enum):
    HONEST = "honest"
    ABORT_AT_LOCK = "lock-abort"
    ABORT_AT_REDEEM = "redeem-abort"
    WRONG_WITNESS = "wrong-witness"


@dataclass(frozen=True)
class AdversaryPolicy:
    corrupted: frozenset[int] = frozenset()
    behavior: Behavior = Behavior.HONEST

    def __post_init__(self):
        object.__setattr__(self, "corrupted", frozenset(self.corrupted))

    def misbehaves(self, party: int) -> bool:
        return self.behavior is not Behavior.HONEST and party in self.corrupted


class OutcomeKind(Enum):
    OUTPUT = "output"
    COMPENSATED = "compensated"
    PENALIZED = "penalized"
    ABORTED_CLEANLY = "aborted-cleanly"


@dataclass(frozen=True)
class PartyOutcome:
    party: int
    kind: OutcomeKind
    output: Optional[bytes] = None
    amount: int = 0


@dataclass
class CmlRun:
    outcomes: dict[int, PartyOutcome]
    schedule: Schedule
    ledger: Ledger
    expected_output: bytes


def _witness_encode(share_bits: bytes, opening: bytes) -> bytes:
    return share_bits + opening


def _witness_decode(witness: bytes) -> tuple[bytes, bytes]:
    return witness[:KEY_BYTES], witness[KEY_BYTES:]


def run_cml(n: int, q: int, timeout: int, inputs: Sequence[bytes],
            f: Callable[..., bytes], adversary: AdversaryPolicy,
            seed: int = 0, ledger: Optional[Ledger] = None) -> CmlRun:
    """One full protocol run under a fixed adversary policy and seed.

    Honest path: every party locks (n-1)q at round 1, redeems at round 2
    (the agreed timeout), reconstructs the key from the revealed openings
    and decrypts the output.  Lock aborts unwind with full refunds and no
    output; redeem aborts cost the aborter its deposit and compensate every
    other party q per withheld witness at round timeout+1; a wrong witness
    is rejected by the commitment check and treated as a non-redemption.
    """
    if len(inputs) != n:
        raise WrongShareCount(f"{n} parties need {n} inputs")
    if timeout < 2:
        raise ValueError("timeout must leave room for the redeem round")
    rng = random.Random(seed)
    bundles = dealer_eval(inputs, f, rng)
    expected = f(*inputs)

    d = (n - 1) * q
    if ledger is None:
        ledger = Ledger({i: d for i in range(1, n + 1)})
    hub = EscrowHub(ledger)
    session = hub.ml_open("cml", n)

    def predicate_for(commitment: bytes) -> Callable[[bytes], bool]:
        return lambda w: commit_verify(commitment, *_witness_decode(w))

    predicates = tuple(predicate_for(c) for c in bundles[0].commitments)
    terms = MlTerms(amount=d, predicates=predicates, timeout=timeout)

    hub.tick()  # round 1: lock phase
    lock_abort = adversary.behavior is Behavior.ABORT_AT_LOCK
    for i in range(1, n + 1):
        if not (lock_abort and i in adversary.corrupted):
            session.lock(i, terms)
    hub.tick()  # round 2: the lock phase resolves
    locked = session.finalize()

    params = ScenarioParams(protocol=ProtocolKind.COMPACT_MULTI_LOCK, n=n, q=q)
    if not locked:
        outcomes = {i: PartyOutcome(i, OutcomeKind.ABORTED_CLEANLY)
                    for i in range(1, n + 1)}
        return CmlRun(outcomes=outcomes,
                      schedule=ledger_schedule(ledger, params),
                      ledger=ledger, expected_output=expected)

    while hub.clock.round < timeout:
        hub.tick()

    # Redeem phase (at the timeout round).
    withheld: set[int] = set()
    for i in range(1, n + 1):
        bundle = bundles[i - 1]
        if adversary.misbehaves(i):
            if adversary.behavior is Behavior.ABORT_AT_REDEEM:
                withheld.add(i)
                continue
            if adversary.behavior is Behavior.WRONG_WITNESS:
                bogus = _witness_encode(bytes(KEY_BYTES), bundle.opening)
                try:
                    session.redeem(i, bogus)
                except BadWitness:
                    withheld.add(i)
                continue
        session.redeem(i, _witness_encode(bundle.share, bundle.opening))

    if withheld:
        hub.tick()  # timeout + 1: compensation phase

    outcomes: dict[int, PartyOutcome] = {}
    s = len(withheld)
    for i in range(1, n + 1):
        if i in withheld:
            outcomes[i] = PartyOutcome(i, OutcomeKind.PENALIZED, amount=d)
        elif s:
            outcomes[i] = PartyOutcome(i, OutcomeKind.COMPENSATED,
                                       amount=s * q)
        else:
            revealed = [session.revealed[j] for j in range(1, n + 1)]
            key = recon([_witness_decode(w)[0] for w in revealed])
            y = dec(key, bundles[i - 1].ciphertext)
            outcomes[i] = PartyOutcome(i, OutcomeKind.OUTPUT, output=y)

    return CmlRun(outcomes=outcomes, schedule=ledger_schedule(ledger, params),
                  ledger=ledger, expected_output=expected)


def xor_function(*inputs: bytes) -> bytes:
    """Bitwise XOR of equal-length inputs; the demo's stand-in computation."""
    length = len(inputs[0])
    if any(len(x) != length for x in inputs):
        raise LengthMismatch("inputs must share one length")
    return _xor_all(list(inputs), length)
