"""Gas accounting per contract operation kind, plus fiat cost reporting.

Gas figures are measured averages (with min/max spread) for each contract
entry point on an EVM deployment; fiat prices are derived once from the full
signature-verification row and then reproduce every other row's USD figure.
The metered path uses the fast verification variant (signature recovery); the
full-verification figure is reportable via the table.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .simchain import EventLog


@dataclass(frozen=True, slots=True)
class GasRow:
    min: int
    max: int
    avg: int
    usd_eth_avg: float
    usd_matic_avg: float

    def __post_init__(self):
        if not self.min <= self.avg <= self.max:
            raise ValueError("gas row must satisfy min <= avg <= max")


# Measured gas per contract operation: (min, max, avg, USD avg on each chain).
DEFAULT_GAS_TABLE: dict[str, GasRow] = {
    "verify": GasRow(1_543_493, 1_862_450, 1_643_712, 32.504, 0.077),
    "verify_fast": GasRow(106_360, 352_838, 150_715, 2.980, 0.007),
    "commit": GasRow(44_825, 62_072, 45_732, 0.904, 0.002),
    "commit_h": GasRow(44_861, 44_897, 44_895, 0.888, 0.002),
    "reveal": GasRow(27_831, 796_620, 87_124, 1.723, 0.004),
    "reveal_h": GasRow(47_355, 47_391, 47_389, 0.937, 0.002),
    "push": GasRow(51_324, 68_424, 51_345, 1.015, 0.002),
    "pop": GasRow(29_013, 46_113, 29_034, 0.574, 0.001),
    "push_prior": GasRow(84_353, 137_955, 91_699, 1.813, 0.004),
    "pop_prior": GasRow(34_909, 116_942, 100_861, 1.995, 0.005),
}

GAS_PRICE_GWEI_ETH = 14.0
GAS_PRICE_GWEI_MATIC = 51.6

# Request lifecycle phases: submit / commit round (verified commit + final pop)
# / reveal round. Values are per-transaction averages from the table above.
PHASE_OPS: dict[str, tuple[str, ...]] = {
    "request": ("push_prior",),
    "commit": ("verify_fast", "commit_h", "pop_prior"),
    "reveal": ("reveal_h",),
}
_PHASE_ALIASES = {
    "1": "request",
    "2a": "commit",
    "2b": "reveal",
    "①": "request",  # circled one
    "②-a": "commit",  # circled two
    "②-b": "reveal",
}


@dataclass(frozen=True, slots=True)
class FiatParams:
    gas_price_gwei: float
    token_usd: float

    @property
    def usd_per_gas(self) -> float:
        return self.gas_price_gwei * 1e-9 * self.token_usd


def derive_token_usd(
    table: Mapping[str, GasRow], gas_price_gwei: float, chain: str = "eth"
) -> float:
    """Solve the verify row for the token's USD price at the given gas price."""
    row = table["verify"]
    usd = row.usd_eth_avg if chain == "eth" else row.usd_matic_avg
    return usd / (row.avg * gas_price_gwei * 1e-9)


def eth_fiat(table: Mapping[str, GasRow] | None = None) -> FiatParams:
    table = table or DEFAULT_GAS_TABLE
    return FiatParams(
        GAS_PRICE_GWEI_ETH, derive_token_usd(table, GAS_PRICE_GWEI_ETH, "eth")
    )


def polygon_fiat(table: Mapping[str, GasRow] | None = None) -> FiatParams:
    table = table or DEFAULT_GAS_TABLE
    return FiatParams(
        GAS_PRICE_GWEI_MATIC, derive_token_usd(table, GAS_PRICE_GWEI_MATIC, "matic")
    )


def phase_gas(phase: str, table: Mapping[str, GasRow] | None = None) -> int:
    table = table or DEFAULT_GAS_TABLE
    key = _PHASE_ALIASES.get(phase, phase)
    if key not in PHASE_OPS:
        raise ValueError(f"unknown phase {phase!r}; expected one of {sorted(PHASE_OPS)}")
    return sum(table[op].avg for op in PHASE_OPS[key])


def usd_cost(gas: int | float, fiat: FiatParams) -> float:
    return gas * fiat.usd_per_gas


class GasMeter:
    """Accumulates average gas per accepted contract operation."""

    def __init__(self, table: Mapping[str, GasRow] | None = None):
        self.table = table or DEFAULT_GAS_TABLE
        self.total = 0
        self.by_kind: dict[str, int] = {}

    def charge(self, *ops: str) -> None:
        for op in ops:
            gas = self.table[op].avg
            self.total += gas
            self.by_kind[op] = self.by_kind.get(op, 0) + gas


# Mapping from event-log outcomes to metered operations, used when rebuilding
# costs from an exported log instead of a live meter.
_EVENT_OPS: dict[tuple[str, str], tuple[str, ...]] = {
    ("request", "queued"): ("push_prior",),
    ("commit", "accepted"): ("verify_fast", "commit_h"),
    ("commit", "quorum"): ("verify_fast", "commit_h", "pop_prior"),
    ("suggest", "queued"): ("push",),
    ("score_commit", "accepted"): ("verify_fast", "commit_h"),
    ("score_commit", "quorum"): ("verify_fast", "commit_h", "pop"),
}
_REVEAL_OPS: tuple[str, ...] = ("reveal_h",)


def run_cost_report(
    log: EventLog, table: Mapping[str, GasRow] | None = None
) -> list[dict]:
    """Itemize gas and USD per request phase from a simulation event log."""
    table = table or DEFAULT_GAS_TABLE
    eth = eth_fiat(table)
    matic = polygon_fiat(table)
    per_request: dict[tuple[int | None, str], int] = {}
    for rec in log.records:
        _, kind, request_id, _, outcome = rec
        ops: Iterable[str]
        if kind in ("reveal", "score_reveal"):
            if outcome in ("accepted", "executed", "executed_partial", "finalized"):
                ops = _REVEAL_OPS
            else:
                continue
        else:
            ops = _EVENT_OPS.get((kind, outcome), ())
        if not ops:
            continue
        phase = {"request": "request", "suggest": "request"}.get(kind, None)
        if phase is None:
            phase = "commit" if "commit" in kind else "reveal"
        key = (request_id, phase)
        per_request[key] = per_request.get(key, 0) + sum(table[op].avg for op in ops)
    rows = []
    for (request_id, phase), gas in sorted(
        per_request.items(), key=lambda kv: (kv[0][0] if kv[0][0] is not None else -1, kv[0][1])
    ):
        rows.append(
            {
                "request_id": request_id,
                "phase": phase,
                "gas": gas,
                "usd_eth": usd_cost(gas, eth),
                "usd_polygon": usd_cost(gas, matic),
            }
        )
    return rows
