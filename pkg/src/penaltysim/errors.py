"""Exception hierarchy shared across the simulator modules."""


class SimulationError(Exception):
    """Base class for all domain errors raised by this package."""


class InvariantViolation(SimulationError):
    """A hard accounting invariant (e.g. coin conservation) was broken."""


# --- schedule -----------------------------------------------------------

class InvalidParty(SimulationError):
    """Party index outside [1, n]."""


class UnsupportedStages(SimulationError):
    """Stage count not supported by the selected protocol."""


class UnsupportedScenario(SimulationError):
    """Abort scenario has no defined semantics for the selected protocol."""


# --- fairness -----------------------------------------------------------

class InsufficientParties(SimulationError):
    """A fairness verdict needs at least two honest parties."""


class DegenerateFair(SimulationError):
    """Every pairwise rotation polynomial is identically zero."""


class InvalidParameters(SimulationError):
    """Game parameters violate the collateral < stake < reward ordering."""


# --- efficiency ---------------------------------------------------------

class UnsupportedProtocol(SimulationError):
    """No concrete data or reconstructed rule exists for this protocol."""


# --- escrow -------------------------------------------------------------

class EscrowError(SimulationError):
    """Base class for escrow session errors."""


class DuplicateDeposit(EscrowError):
    """A second deposit for the same (sender, receiver) sub-session."""


class BadWitness(EscrowError):
    """Submitted witness does not satisfy the session predicate."""


class Expired(EscrowError):
    """Claim or redeem attempted after the session timeout."""


class NotYetRefundable(EscrowError):
    """Refund requested before the timeout has elapsed."""


class MismatchedTerms(EscrowError):
    """Lock terms disagree across parties, or session already aborted."""


class AlreadyRedeemed(EscrowError):
    """A party attempted to redeem twice."""


# --- cml ----------------------------------------------------------------

class WrongShareCount(SimulationError):
    """Reconstruction got a share list of the wrong length."""


class LengthMismatch(SimulationError):
    """Ciphertext/plaintext length does not match the declared size."""


# --- btcscript ----------------------------------------------------------

class ScriptError(SimulationError):
    """Base class for script construction and interpretation errors."""


class SizeLimitExceeded(ScriptError):
    """Serialized transaction exceeds the 100,000-byte policy limit."""


class InvalidBranch(ScriptError):
    """Spending transaction cannot take the requested script branch."""


class StackUnderflow(ScriptError):
    """Opcode needed more stack items than available."""


class UnbalancedIf(ScriptError):
    """IF/ELSE/ENDIF nesting is malformed."""


class VerifyFailed(ScriptError):
    """A *VERIFY-style opcode (or final check) failed.

    Carries the opcode name that failed in ``args[0]``.
    """

    def __init__(self, opcode: str, detail: str = ""):
        self.opcode = opcode
        super().__init__(opcode if not detail else f"{opcode}: {detail}")
