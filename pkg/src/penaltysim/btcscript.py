"""Bitcoin-subset transactions, scripts, and a stack interpreter.

Covers exactly what the multi-lock realization needs: IF/ELSE branching,
double-SHA256 preimage checks, mock signature checks, and BIP-65-style
CHECKLOCKTIMEVERIFY.  Transactions serialize to a simple length-prefixed
layout (not consensus encoding); the legacy transaction id hashes the full
serialization including witnesses while the segwit id hashes the simplified
form without them, which is all the malleability demonstration requires.

Signatures are a deterministic mock: sign(name, msg) is a keyed digest and
verification recomputes it from a pubkey registry.  Real ECDSA adds nothing
to the script logic under test.

Output scripts are stored inline for interpretability; `to_script_hash_form`
converts a transaction to hash-committed outputs when the address-style
serialization is wanted.  On the real network only the lock transaction is a
standard template — redeem and compensate spends are non-standard and relay
policy beyond the size cap is not modeled here.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from .errors import (
    InvalidBranch,
    ScriptError,
    SizeLimitExceeded,
    StackUnderflow,
    UnbalancedIf,
    VerifyFailed,
)

OP_IF = "OP_IF"
OP_ELSE = "OP_ELSE"
OP_ENDIF = "OP_ENDIF"
OP_HASH256 = "OP_HASH256"
OP_EQUALVERIFY = "OP_EQUALVERIFY"
OP_CHECKSIG = "OP_CHECKSIG"
OP_CHECKSIGVERIFY = "OP_CHECKSIGVERIFY"
OP_CHECKLOCKTIMEVERIFY = "OP_CHECKLOCKTIMEVERIFY"
OP_DROP = "OP_DROP"

_OPCODES = (OP_IF, OP_ELSE, OP_ENDIF, OP_HASH256, OP_EQUALVERIFY,
            OP_CHECKSIG, OP_CHECKSIGVERIFY, OP_CHECKLOCKTIMEVERIFY, OP_DROP)
_OPCODE_BYTE = {name: bytes([0x51 + i]) for i, name in enumerate(_OPCODES)}
_BYTE_OPCODE = {v[0]: k for k, v in _OPCODE_BYTE.items()}

# Script item: bytes = data push, str = named opcode.
ScriptItem = bytes | str
Script = list


def hash256(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def encode_script_num(n: int) -> bytes:
    """Minimal little-endian script integer (non-negative)."""
    if n < 0:
        raise ValueError("negative script numbers unsupported")
    if n == 0:
        return b""
    out = bytearray()
    while n:
        out.append(n & 0xFF)
        n >>= 8
    if out[-1] & 0x80:
        out.append(0x00)
    return bytes(out)


def decode_script_num(data: bytes) -> int:
    n = 0
    for i, b in enumerate(data):
        n |= b << (8 * i)
    return n


# ---------------------------------------------------------------------------
# Mock signatures
# ---------------------------------------------------------------------------

class Keyring:
    """Registry of named mock keypairs.

    pubkey = 0x02 || sha256("pk/" + name)[:32]; signature = sha256 over
    (private key id, message).  Verification recomputes the signature from
    the registered name, so a signature is valid only for the exact message.
    """

    def __init__(self):
        self._by_pub: dict[bytes, str] = {}
        self._by_name: dict[str, bytes] = {}

    def register(self, name: str) -> bytes:
        if name in self._by_name:
            return self._by_name[name]
        pub = b"\x02" + hashlib.sha256(b"pk/" + name.encode()).digest()
        self._by_pub[pub] = name
        self._by_name[name] = pub
        return pub

    def pubkey(self, name: str) -> bytes:
        return self._by_name[name]

    def sign(self, name: str, message: bytes) -> bytes:
        if name not in self._by_name:
            raise KeyError(name)
        return hashlib.sha256(b"sig/" + name.encode() + b"/" + message).digest()

    def verify(self, pubkey: bytes, message: bytes, signature: bytes) -> bool:
        name = self._by_pub.get(pubkey)
        if name is None:
            return False
        return self.sign(name, message) == signature


# ---------------------------------------------------------------------------
# Transactions
# ---------------------------------------------------------------------------

@dataclass
class TxIn:
    prev_txid: bytes
    prev_index: int
    value: int
    witness: Script = field(default_factory=list)


@dataclass
class TxOut:
    index: int
    value: int
    script: Script


@dataclass
class Tx:
    inputs: list[TxIn]
    outputs: list[TxOut]
    lock_time: int = 0

    def __post_init__(self):
        if self.inputs and self.outputs:
            if sum(i.value for i in self.inputs) < sum(o.value
                                                       for o in self.outputs):
                raise ValueError("outputs exceed inputs")


class TxidMode(Enum):
    LEGACY = "legacy"
    SEGWIT = "segwit"


def _u32(n: int) -> bytes:
    return n.to_bytes(4, "big")


def _u64(n: int) -> bytes:
    return n.to_bytes(8, "big")


def serialize_script(script: Script) -> bytes:
    out = bytearray(_u32(len(script)))
    for item in script:
        if isinstance(item, bytes):
            out += b"\x00" + _u32(len(item)) + item
        else:
            out += _OPCODE_BYTE[item]
    return bytes(out)


def parse_script(data: bytes, pos: int = 0) -> tuple[Script, int]:
    count = int.from_bytes(data[pos:pos + 4], "big")
    pos += 4
    script: Script = []
    for _ in range(count):
        tag = data[pos]
        pos += 1
        if tag == 0:
            ln = int.from_bytes(data[pos:pos + 4], "big")
            pos += 4
            script.append(bytes(data[pos:pos + ln]))
            pos += ln
        else:
            script.append(_BYTE_OPCODE[tag])
    return script, pos


def serialize_tx(tx: Tx, include_witness: bool = True) -> bytes:
    out = bytearray(_u32(len(tx.inputs)))
    for tin in tx.inputs:
        out += tin.prev_txid + _u32(tin.prev_index) + _u64(tin.value)
        out += serialize_script(tin.witness if include_witness else [])
    out += _u32(len(tx.outputs))
    for tout in tx.outputs:
        out += _u32(tout.index) + _u64(tout.value)
        out += serialize_script(tout.script)
    out += _u32(tx.lock_time)
    return bytes(out)


def parse_tx(data: bytes) -> Tx:
    pos = 0
    n_in = int.from_bytes(data[pos:pos + 4], "big")
    pos += 4
    inputs = []
    for _ in range(n_in):
        htx = bytes(data[pos:pos + 32])
        idx = int.from_bytes(data[pos + 32:pos + 36], "big")
        val = int.from_bytes(data[pos + 36:pos + 44], "big")
        pos += 44
        wit, pos = parse_script(data, pos)
        inputs.append(TxIn(htx, idx, val, wit))
    n_out = int.from_bytes(data[pos:pos + 4], "big")
    pos += 4
    outputs = []
    for _ in range(n_out):
        idx = int.from_bytes(data[pos:pos + 4], "big")
        val = int.from_bytes(data[pos + 4:pos + 12], "big")
        pos += 12
        script, pos = parse_script(data, pos)
        outputs.append(TxOut(idx, val, script))
    lock_time = int.from_bytes(data[pos:pos + 4], "big")
    return Tx(inputs, outputs, lock_time)


def simplified_form(tx: Tx) -> bytes:
    """Serialization with all witnesses stripped; the signing message."""
    return serialize_tx(tx, include_witness=False)


def script_address(script: Script) -> bytes:
    """Hash commitment to an output script (pay-to-script-hash style)."""
    return hash256(serialize_script(script))


def to_script_hash_form(tx: Tx) -> Tx:
    """Copy of `tx` with every output script replaced by its address."""
    return Tx(
        inputs=[TxIn(t.prev_txid, t.prev_index, t.value, list(t.witness))
                for t in tx.inputs],
        outputs=[TxOut(o.index, o.value, [script_address(o.script)])
                 for o in tx.outputs],
        lock_time=tx.lock_time,
    )


def txid(tx: Tx, mode: TxidMode = TxidMode.SEGWIT) -> bytes:
    if mode is TxidMode.LEGACY:
        return hash256(serialize_tx(tx, include_witness=True))
    return hash256(simplified_form(tx))


# ---------------------------------------------------------------------------
# Interpreter
# ---------------------------------------------------------------------------

@dataclass
class ExecContext:
    height: int
    lock_time: int = 0
    message: bytes = b""
    keyring: Optional[Keyring] = None

    def checksig(self, pubkey: bytes, signature: bytes) -> bool:
        if self.keyring is None:
            return False
        return self.keyring.verify(pubkey, self.message, signature)


@dataclass(frozen=True)
class ScriptResult:
    accepted: bool
    error: Optional[ScriptError] = None

    def __bool__(self) -> bool:
        return self.accepted


def _truthy(item: bytes) -> bool:
    return any(item)


def interpret(script: Script, witness: Script, ctx: ExecContext,
              ) -> ScriptResult:
    """Run `witness` then `script` on one stack; accept on truthy top."""
    try:
        stack: list[bytes] = []
        _execute(witness, stack, ctx)
        _execute(script, stack, ctx)
        if not stack or not _truthy(stack[-1]):
            raise VerifyFailed("FINAL_STACK", "empty or false result")
        return ScriptResult(True)
    except ScriptError as err:
        return ScriptResult(False, err)


def _execute(script: Script, stack: list[bytes], ctx: ExecContext) -> None:
    # exec_flags[i] tracks whether the i-th enclosing branch is active.
    exec_flags: list[bool] = []
    taken: list[bool] = []
    for item in script:
        active = all(exec_flags)
        if isinstance(item, str) and item in (OP_IF, OP_ELSE, OP_ENDIF):
            if item == OP_IF:
                if active:
                    if not stack:
                        raise StackUnderflow(OP_IF)
                    cond = _truthy(stack.pop())
                else:
                    cond = False
                exec_flags.append(cond)
                taken.append(cond)
            elif item == OP_ELSE:
                if not exec_flags:
                    raise UnbalancedIf("OP_ELSE without OP_IF")
                exec_flags[-1] = not taken[-1] and all(exec_flags[:-1])
            else:
                if not exec_flags:
                    raise UnbalancedIf("OP_ENDIF without OP_IF")
                exec_flags.pop()
                taken.pop()
            continue
        if not active:
            continue
        if isinstance(item, bytes):
            stack.append(item)
        elif item == OP_HASH256:
            if not stack:
                raise StackUnderflow(item)
            stack.append(hash256(stack.pop()))
        elif item == OP_EQUALVERIFY:
            if len(stack) < 2:
                raise StackUnderflow(item)
            a, b = stack.pop(), stack.pop()
            if a != b:
                raise VerifyFailed(OP_EQUALVERIFY)
        elif item in (OP_CHECKSIG, OP_CHECKSIGVERIFY):
            if len(stack) < 2:
                raise StackUnderflow(item)
            pubkey, sig = stack.pop(), stack.pop()
            ok = ctx.checksig(pubkey, sig)
            if item == OP_CHECKSIG:
                stack.append(b"\x01" if ok else b"")
            elif not ok:
                raise VerifyFailed(OP_CHECKSIGVERIFY)
        elif item == OP_CHECKLOCKTIMEVERIFY:
            if not stack:
                raise StackUnderflow(item)
            locktime = decode_script_num(stack[-1])
            if ctx.lock_time < locktime:
                raise VerifyFailed(OP_CHECKLOCKTIMEVERIFY,
                                   "tx lock_time below required")
            if ctx.height < locktime:
                raise VerifyFailed(OP_CHECKLOCKTIMEVERIFY,
                                   "height below required")
        elif item == OP_DROP:
            if not stack:
                raise StackUnderflow(item)
            stack.pop()
        else:
            raise ScriptError(f"unknown opcode {item!r}")
    if exec_flags:
        raise UnbalancedIf("missing OP_ENDIF")


def disassemble(script: Script) -> str:
    parts = []
    for item in script:
        parts.append(f"<{item.hex()}>" if isinstance(item, bytes) else item)
    return " ".join(parts)


# ---------------------------------------------------------------------------
# Multi-lock transaction templates
# ---------------------------------------------------------------------------

POLICY_MAX_TX_BYTES = 100_000
# The simplified layout above under-counts consensus bytes (no P2SH
# redemption envelopes); scale measured sizes so the policy boundary
# falls between 14 and 15 parties as on the real network.
SIZE_CALIBRATION = 3.5


def effective_size(tx: Tx) -> int:
    return int(len(serialize_tx(tx)) * SIZE_CALIBRATION)


def claim_or_refund_script(preimage_hash: bytes, receiver_pub: bytes,
                           sender_pub: bytes, timeout: int) -> Script:
    """Fixed claim-or-refund circuit: hash preimage + receiver key before
    the timeout, sender key under CHECKLOCKTIMEVERIFY after it."""
    return [
        OP_IF,
        OP_HASH256, preimage_hash, OP_EQUALVERIFY,
        receiver_pub, OP_CHECKSIG,
        OP_ELSE,
        encode_script_num(timeout), OP_CHECKLOCKTIMEVERIFY, OP_DROP,
        sender_pub, OP_CHECKSIG,
        OP_ENDIF,
    ]


def lock_output_script(secret_hash: bytes, owner_pub: bytes,
                       other_pub: bytes, timeout: int) -> Script:
    """Output (i, j) of the lock transaction: owner i redeems with its
    secret before the timeout, party j compensates after it."""
    return claim_or_refund_script(secret_hash, owner_pub, other_pub, timeout)


def lock_output_index(n: int, i: int, j: int) -> int:
    """Position of output (i, j), enumerating j != i for i = 1..n."""
    if i == j or not (1 <= i <= n and 1 <= j <= n):
        raise InvalidBranch(f"no lock output ({i},{j})")
    return (i - 1) * (n - 1) + (j - 1 if j < i else j - 2)


def make_funding_tx(n: int, q: int, keyring: Keyring) -> Tx:
    """Root transaction giving each party a spendable (n-1)q coin."""
    outputs = [
        TxOut(index=i - 1, value=(n - 1) * q,
              script=[keyring.register(f"P{i:02d}"), OP_CHECKSIG])
        for i in range(1, n + 1)
    ]
    coinbase = TxIn(prev_txid=bytes(32), prev_index=0,
                    value=n * (n - 1) * q, witness=[])
    return Tx(inputs=[coinbase], outputs=outputs)


def build_ml_lock_tx(n: int, q: int, secret_hashes: Sequence[bytes],
                     keyring: Keyring, timeout: int, funding: Tx,
                     funding_mode: TxidMode = TxidMode.SEGWIT) -> Tx:
    """The n-input, n(n-1)-output lock transaction.

    Input i spends party i's (n-1)q funding coin; output (i, j) carries q
    and is spendable by i with its secret before the timeout or by j after
    it.  Total out equals total in: n(n-1)q.
    """
    if n < 2:
        raise ValueError("n >= 2")
    if len(secret_hashes) != n:
        raise ValueError("one secret hash per party")
    fund_id = txid(funding, funding_mode)
    pubs = [keyring.pubkey(f"P{i:02d}") for i in range(1, n + 1)]
    inputs = [TxIn(fund_id, i, (n - 1) * q) for i in range(n)]
    outputs = []
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if j == i:
                continue
            outputs.append(TxOut(
                index=lock_output_index(n, i, j), value=q,
                script=lock_output_script(secret_hashes[i - 1], pubs[i - 1],
                                          pubs[j - 1], timeout)))
    outputs.sort(key=lambda o: o.index)
    tx = Tx(inputs=inputs, outputs=outputs)
    message = simplified_form(tx)
    for i in range(1, n + 1):
        tx.inputs[i - 1].witness = [keyring.sign(f"P{i:02d}", message)]
    size = effective_size(tx)
    if size > POLICY_MAX_TX_BYTES:
        raise SizeLimitExceeded(
            f"lock tx for {n} parties is {size} effective bytes "
            f"(limit {POLICY_MAX_TX_BYTES})")
    return tx


def build_redeem_tx(lock_tx: Tx, n: int, q: int, party: int, secret: bytes,
                    keyring: Keyring,
                    lock_mode: TxidMode = TxidMode.SEGWIT) -> Tx:
    """Party `party` collects its n-1 lock outputs via the secret branch."""
    name = f"P{party:02d}"
    expected = lock_tx.outputs[lock_output_index(n, party,
                                                 1 if party != 1 else 2)]
    if hash256(secret) != expected.script[2]:
        raise InvalidBranch("secret does not match the committed hash")
    lock_id = txid(lock_tx, lock_mode)
    inputs = [
        TxIn(lock_id, lock_output_index(n, party, j), q)
        for j in range(1, n + 1) if j != party
    ]
    outputs = [TxOut(index=0, value=(n - 1) * q,
                     script=[keyring.pubkey(name), OP_CHECKSIG])]
    tx = Tx(inputs=inputs, outputs=outputs, lock_time=0)
    sig = keyring.sign(name, simplified_form(tx))
    for tin in tx.inputs:
        tin.witness = [sig, secret, b"\x01"]
    return tx


def build_compensate_tx(lock_tx: Tx, n: int, q: int, party: int,
                        from_parties: Iterable[int], keyring: Keyring,
                        timeout: int,
                        lock_mode: TxidMode = TxidMode.SEGWIT) -> Tx:
    """Party `party` collects q from each non-redeeming party after the
    timeout, via the CHECKLOCKTIMEVERIFY branch."""
    name = f"P{party:02d}"
    sources = list(from_parties)
    if party in sources:
        raise InvalidBranch("cannot compensate from one's own outputs")
    lock_id = txid(lock_tx, lock_mode)
    inputs = [TxIn(lock_id, lock_output_index(n, i, party), q)
              for i in sources]
    outputs = [TxOut(index=0, value=q * len(sources),
                     script=[keyring.pubkey(name), OP_CHECKSIG])]
    tx = Tx(inputs=inputs, outputs=outputs, lock_time=timeout)
    sig = keyring.sign(name, simplified_form(tx))
    for tin in tx.inputs:
        tin.witness = [sig, b""]
    return tx


# ---------------------------------------------------------------------------
# Verification harness
# ---------------------------------------------------------------------------

class UtxoView:
    """Minimal confirmed-output set keyed by (txid, index) per id mode."""

    def __init__(self, keyring: Keyring, mode: TxidMode = TxidMode.SEGWIT):
        self.keyring = keyring
        self.mode = mode
        self.utxos: dict[tuple[bytes, int], TxOut] = {}

    def confirm(self, tx: Tx) -> bytes:
        tid = txid(tx, self.mode)
        for out in tx.outputs:
            self.utxos[(tid, out.index)] = out
        return tid

    def verify_spend(self, tx: Tx, height: int) -> ScriptResult:
        message = simplified_form(tx)
        total_in = 0
        for tin in tx.inputs:
            out = self.utxos.get((tin.prev_txid, tin.prev_index))
            if out is None:
                return ScriptResult(False, InvalidBranch(
                    "input references no confirmed unspent output"))
            ctx = ExecContext(height=height, lock_time=tx.lock_time,
                              message=message, keyring=self.keyring)
            result = interpret(out.script, tin.witness, ctx)
            if not result:
                return result
            total_in += out.value
        if total_in < sum(o.value for o in tx.outputs):
            return ScriptResult(False, InvalidBranch("value created"))
        return ScriptResult(True)

    def apply(self, tx: Tx, height: int) -> ScriptResult:
        result = self.verify_spend(tx, height)
        if result:
            for tin in tx.inputs:
                del self.utxos[(tin.prev_txid, tin.prev_index)]
            self.confirm(tx)
        return result


def run_ml_flow(n: int, q: int, timeout: int,
                abort_party: Optional[int] = None,
                mode: TxidMode = TxidMode.SEGWIT) -> dict[int, int]:
    """Full lock/redeem/compensate flow; returns net coin change per party.

    Honest parties redeem at height timeout-1; with an aborting party,
    everyone else additionally claims its compensation output at height
    timeout+1.  Mirrors the multi-lock escrow semantics coin for coin.
    """
    keyring = Keyring()
    funding = make_funding_tx(n, q, keyring)
    secrets = {i: f"secret-{i}".encode() for i in range(1, n + 1)}
    hashes = [hash256(secrets[i]) for i in range(1, n + 1)]

    view = UtxoView(keyring, mode)
    view.confirm(funding)
    lock = build_ml_lock_tx(n, q, hashes, keyring, timeout, funding, mode)
    result = view.apply(lock, height=1)
    if not result:
        raise result.error

    received = {i: 0 for i in range(1, n + 1)}
    for i in range(1, n + 1):
        if i == abort_party:
            continue
        redeem = build_redeem_tx(lock, n, q, i, secrets[i], keyring, mode)
        result = view.apply(redeem, height=timeout - 1)
        if not result:
            raise result.error
        received[i] += (n - 1) * q
    if abort_party is not None:
        for j in range(1, n + 1):
            if j == abort_party:
                continue
            comp = build_compensate_tx(lock, n, q, j, [abort_party], keyring,
                                       timeout, mode)
            result = view.apply(comp, height=timeout + 1)
            if not result:
                raise result.error
            received[j] += q
    return {i: received[i] - (n - 1) * q for i in range(1, n + 1)}


# ---------------------------------------------------------------------------
# Malleability demonstration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MalleabilityReport:
    legacy_before: bytes
    legacy_after: bytes
    segwit_before: bytes
    segwit_after: bytes
    mutated_parent_valid: bool
    dependent_valid_legacy: bool
    dependent_valid_segwit: bool

    @property
    def legacy_id_changed(self) -> bool:
        return self.legacy_before != self.legacy_after

    @property
    def segwit_id_changed(self) -> bool:
        return self.segwit_before != self.segwit_after


def mutate_witness(tx: Tx, junk: bytes = b"\xde\xad") -> Tx:
    """Harmless third-party mutation: push junk, drop it, keep signatures."""
    mutated = Tx(
        inputs=[TxIn(t.prev_txid, t.prev_index, t.value,
                     [junk, OP_DROP, *t.witness]) for t in tx.inputs],
        outputs=list(tx.outputs),
        lock_time=tx.lock_time,
    )
    return mutated


def malleability_demo(n: int = 2, q: int = 1000, timeout: int = 150,
                      ) -> MalleabilityReport:
    """Mutate an unconfirmed lock transaction's witness and test whether a
    pre-signed dependent (a redeem) survives under each id scheme."""
    keyring = Keyring()
    funding = make_funding_tx(n, q, keyring)
    secrets = {i: f"secret-{i}".encode() for i in range(1, n + 1)}
    hashes = [hash256(secrets[i]) for i in range(1, n + 1)]
    lock = build_ml_lock_tx(n, q, hashes, keyring, timeout, funding)

    # The dependent redeem is built against the *unconfirmed* lock, one
    # version per id scheme.
    dep_legacy = build_redeem_tx(lock, n, q, 1, secrets[1], keyring,
                                 TxidMode.LEGACY)
    dep_segwit = build_redeem_tx(lock, n, q, 1, secrets[1], keyring,
                                 TxidMode.SEGWIT)

    mutated = mutate_witness(lock)
    # The mutated parent is still a valid spend of the funding outputs.
    view = UtxoView(keyring, TxidMode.SEGWIT)
    view.confirm(funding)
    parent_ok = bool(view.verify_spend(mutated, height=1))

    # Validity of the dependent = does its input reference the id the
    # network confirmed (the mutated one)?
    dep_ok_legacy = dep_legacy.inputs[0].prev_txid == txid(
        mutated, TxidMode.LEGACY)
    dep_ok_segwit = dep_segwit.inputs[0].prev_txid == txid(
        mutated, TxidMode.SEGWIT)

    return MalleabilityReport(
        legacy_before=txid(lock, TxidMode.LEGACY),
        legacy_after=txid(mutated, TxidMode.LEGACY),
        segwit_before=txid(lock, TxidMode.SEGWIT),
        segwit_after=txid(mutated, TxidMode.SEGWIT),
        mutated_parent_valid=parent_ok,
        dependent_valid_legacy=dep_ok_legacy,
        dependent_valid_segwit=dep_ok_segwit,
    )
