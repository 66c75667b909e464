"""penaltysim: schedules, fairness, and on-chain costs of penalty protocols.

Modules:
  schedule    deposit/refund event generation per protocol
  fairness    discounting, net present cost, theorems, rotation analysis
  efficiency  transaction/round/script cost model and figure series
  escrow      claim-or-refund and multi-lock state machines over a ledger
  cml         reference compact multi-lock run with adversary injection
  btcscript   script-level multi-lock realization and malleability demo
  cli         command-line front end
"""

from .schedule import (
    AbortSpec,
    CashFlow,
    FlowKind,
    ProtocolKind,
    ScenarioParams,
    Schedule,
    apply_abort,
    balance_trace,
    generate_schedule,
    max_lock_window,
    schedule_to_csv,
    total_deposit,
)

__all__ = [
    "AbortSpec",
    "CashFlow",
    "FlowKind",
    "ProtocolKind",
    "ScenarioParams",
    "Schedule",
    "apply_abort",
    "balance_trace",
    "generate_schedule",
    "max_lock_window",
    "schedule_to_csv",
    "total_deposit",
]

__version__ = "0.1.0"
