"""Discrete-event simulated blockchain.

Blocks are produced at a fixed interval; block h lands at t = h * interval.
Transactions submitted while block h is the tip are included in block h+1 at
the earliest. The mempool has two lanes: inference requests sort by feePrice
(descending) among themselves, everything else is FIFO; lanes interleave by
arrival tick, FIFO lane first on ties. Execution-time accounting is integer
microseconds so throughput metrics are exact.
"""
from __future__ import annotations

import heapq
from array import array
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Optional

# Transaction kinds
REQUEST = "request"
COMMIT = "commit"
REVEAL = "reveal"  # the quorum-completing reveal also executes
SUGGEST = "suggest"
SCORE_COMMIT = "score_commit"
SCORE_REVEAL = "score_reveal"
PLAIN = "plain"


@dataclass(frozen=True, slots=True)
class ChainParams:
    block_interval_s: float = 12.06
    txs_per_block: int = 155
    base_tx_exec_ms: int = 1

    def __post_init__(self):
        if self.block_interval_s <= 0 or self.txs_per_block <= 0 or self.base_tx_exec_ms <= 0:
            raise ValueError("chain parameters must be strictly positive")

    @property
    def base_tx_exec_us(self) -> int:
        return self.base_tx_exec_ms * 1000


@dataclass(slots=True)
class Tx:
    kind: str
    sender: Any
    payload: Any
    submitted_at_block: int
    exec_time_us: int
    fee_price: int = 0  # ordering key for request txs


@dataclass(slots=True)
class Block:
    height: int
    txs: list[Tx]


class Mempool:
    """Two-lane mempool: priority lane for requests, FIFO for the rest."""

    def __init__(self):
        self._prio: list[tuple[int, int, int, Tx]] = []  # (-fee, seq, tick, tx)
        self._fifo: deque[tuple[int, int, Tx]] = deque()  # (tick, seq, tx)
        self._seq = 0

    def __len__(self) -> int:
        return len(self._prio) + len(self._fifo)

    def submit(self, tx: Tx, tick: int) -> None:
        self._seq += 1
        if tx.kind == REQUEST:
            heapq.heappush(self._prio, (-tx.fee_price, self._seq, tick, tx))
        else:
            self._fifo.append((tick, self._seq, tx))

    def drain(self, cap: int) -> list[Tx]:
        out: list[Tx] = []
        prio, fifo = self._prio, self._fifo
        while len(out) < cap and (prio or fifo):
            if not prio:
                out.append(fifo.popleft()[2])
            elif not fifo:
                out.append(heapq.heappop(prio)[3])
            elif fifo[0][0] <= prio[0][2]:  # FIFO lane first on tick ties
                out.append(fifo.popleft()[2])
            else:
                out.append(heapq.heappop(prio)[3])
        return out


class EventLog:
    """Run record: per-tx events, compact plain-tx blocks, metric counters.

    Record tuple: (block, tx_kind, request_id, node_id, outcome).
    """

    def __init__(self):
        self.records: list[tuple[int, str, Optional[int], Optional[int], str]] = []
        self.plain_blocks = array("q")
        self.tasks_completed = 0
        self.accepted_exec_us = 0
        self.plain_count = 0
        self.timeouts = 0
        self.latencies: list[int] = []
        self.final_block = -1

    def record(
        self,
        block: int,
        kind: str,
        request_id: Optional[int],
        node_id: Optional[int],
        outcome: str,
    ) -> None:
        self.records.append((block, kind, request_id, node_id, outcome))

    def plain(self, block: int, exec_us: int) -> None:
        self.plain_blocks.append(block)
        self.plain_count += 1
        self.tasks_completed += 1
        self.accepted_exec_us += exec_us

    def lines(self) -> Iterator[str]:
        plains = self.plain_blocks
        recs = self.records
        pi = ri = 0
        while pi < len(plains) or ri < len(recs):
            if ri >= len(recs) or (pi < len(plains) and plains[pi] <= recs[ri][0]):
                yield f"{plains[pi]},plain,,,accepted"
                pi += 1
            else:
                b, kind, rid, nid, outcome = recs[ri]
                rid_s = "" if rid is None else str(rid)
                nid_s = "" if nid is None else str(nid)
                yield f"{b},{kind},{rid_s},{nid_s},{outcome}"
                ri += 1

    def export(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.lines():
                fh.write(line + "\n")


class InvariantViolation(AssertionError):
    pass


class SimChain:
    """Single-threaded deterministic block production loop."""

    def __init__(
        self,
        params: ChainParams,
        contract=None,
        runtime=None,
        feed=None,
        log: Optional[EventLog] = None,
        request_tx_builder: Optional[Callable[[Any, int], Tx]] = None,
    ):
        self.params = params
        self.contract = contract
        self.runtime = runtime
        self.feed = feed
        self.log = log if log is not None else EventLog()
        self.mempool = Mempool()
        self.height = 0  # next block to produce
        self._build_request_tx = request_tx_builder

    def submit(self, tx: Tx) -> bool:
        """Queue a transaction for inclusion from the next block on."""
        self.mempool.submit(tx, self.height)
        return True

    def _user_tick(self, h: int) -> None:
        if self.feed is None:
            return
        spec = self.feed.next()
        if spec is None:
            if len(self.mempool) == 0:
                # lone plain user tx: skip mempool machinery
                self.log.plain(h, self.params.base_tx_exec_us)
            else:
                tx = Tx(PLAIN, "user", None, h, self.params.base_tx_exec_us)
                self.mempool.submit(tx, h)
        else:
            tx = self._build_request_tx(spec, h)
            self.mempool.submit(tx, h)

    def _apply(self, tx: Tx, h: int) -> tuple[bool, str]:
        if tx.kind == PLAIN:
            self.log.plain(h, tx.exec_time_us)
            return True, "accepted"
        accepted, outcome = self.contract.apply(tx, h)
        if accepted:
            self.log.accepted_exec_us += tx.exec_time_us
        return accepted, outcome

    def _step(self, h: int, collect: bool = False) -> Optional[list[Tx]]:
        self._user_tick(h)
        txs: Optional[list[Tx]] = None
        if len(self.mempool):
            drained = self.mempool.drain(self.params.txs_per_block)
            for tx in drained:
                self._apply(tx, h)
            if collect:
                txs = drained
        elif collect:
            txs = []
        if self.contract is not None:
            self.contract.end_of_block(h)
        if self.runtime is not None:
            self.runtime.observe(h)
        self.log.final_block = h
        return txs

    def produce_block(self) -> Block:
        h = self.height
        txs = self._step(h, collect=True)
        self.height = h + 1
        return Block(height=h, txs=txs or [])

    def _finished(self) -> bool:
        if self.feed is not None and not self.feed.exhausted():
            return False
        if len(self.mempool):
            return False
        if self.contract is not None and self.contract.open_requests() > 0:
            return False
        if self.runtime is not None and self.runtime.pending_work():
            return False
        return True

    def run(self, until: Optional[int] = None, max_blocks: int = 50_000_000) -> EventLog:
        step = self._step
        start = h = self.height
        if until is not None:
            while h < until:
                step(h)
                h += 1
                self.height = h
        else:
            while not self._finished():
                step(h)
                h += 1
                self.height = h
                if h - start > max_blocks:
                    raise InvariantViolation(
                        f"run did not resolve within {max_blocks} blocks"
                    )
        return self.log
