"""On-chain coordination contract: request queue, committee commit/reveal,
execution settlement, and the training-update track.

Money is integer token units.  Every balance-moving path keeps the sum of
user/app balances + node deposits + per-request escrow + treasury constant;
`total_assets()` exposes that sum so harnesses can assert it block by block.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .economics import GasMeter
from .federated import ModelUpdate, WeightStore
from .simchain import (
    COMMIT,
    EventLog,
    REQUEST,
    REVEAL,
    SCORE_COMMIT,
    SCORE_REVEAL,
    SUGGEST,
    Tx,
)
from .sortition import SortitionMsg, hash256, is_elected, lagged_seed, verify

USER_ACCOUNT = "user"
APP_ACCOUNT = "app"

# Timeouts at or above this many blocks never fire; skip scheduling them.
NEVER = 10 ** 8


def seed_evolution_msg(prev_seed: bytes, round_index: int) -> bytes:
    """Message a committer's VRF signs to advance the shared seed."""
    return prev_seed + round_index.to_bytes(8, "big")


def commitment_hash(value: bytes, addr: bytes, nonce: bytes) -> bytes:
    return hash256(value + addr + nonce)


def node_addr(node_id: int) -> bytes:
    return node_id.to_bytes(8, "big")


# ---------------------------------------------------------------------------
# parameters


@dataclass
class HyperParams:
    epoch_blocks: int = 8
    training_epoch_blocks: int = 8
    difficulty: int = 2 ** 255
    training_difficulty: int = 2 ** 255
    finality_lag: int = 2
    commit_quorum: int = 11
    reveal_quorum: int = 11
    commit_timeout: int = 10 ** 9
    reveal_timeout: int = 10 ** 9
    reward_commit: int = 0
    reward_reveal: int = 1
    reward_execute: int = 2
    reward_update: int = 2
    reward_suggest: int = 10
    penalty_commit: int = 50
    penalty_reveal: int = 50
    penalty_suggest: int = 100
    score_threshold: int = 2000
    window_len: int = 4
    fallback: str = "execute_partial"  # or "requeue"
    ring_capacity: int = 64
    node_deposit: int = 1000
    priority_max: int = 1001

    def __post_init__(self):
        if self.reveal_quorum > self.commit_quorum:
            raise ValueError("reveal quorum cannot exceed commit quorum")
        if self.commit_quorum < 1:
            raise ValueError("commit quorum must be positive")
        if self.window_len < 2:
            raise ValueError("window_len must be at least 2")
        if not 0 <= self.score_threshold <= 10_000:
            raise ValueError("score_threshold is basis points in [0, 10000]")
        if self.fallback not in ("execute_partial", "requeue"):
            raise ValueError(f"unknown fallback mode: {self.fallback!r}")
        if self.epoch_blocks < 1 or self.training_epoch_blocks < 1:
            raise ValueError("epoch lengths must be positive")


# ---------------------------------------------------------------------------
# request / committee records


@dataclass
class InferenceRequest:
    id: int
    net: str
    ver: bytes
    input: bytes
    seed: int
    args: bytes
    target: str
    funcsig: bytes
    value: int
    timeout: int
    fee_price: int
    fee_limit: int
    priority: int
    submitted_at: int = -1

    def digest(self) -> bytes:
        parts = [
            self.id.to_bytes(8, "big"),
            self.net.encode(),
            self.ver,
            len(self.input).to_bytes(4, "big"),
            self.input,
            self.seed.to_bytes(8, "big", signed=False),
            len(self.args).to_bytes(4, "big"),
            self.args,
            self.target.encode(),
            self.funcsig,
            self.value.to_bytes(8, "big"),
            self.timeout.to_bytes(8, "big"),
            self.fee_price.to_bytes(8, "big"),
            self.fee_limit.to_bytes(8, "big"),
            self.priority.to_bytes(4, "big"),
        ]
        return hash256(b"".join(parts))


@dataclass(frozen=True, slots=True)
class CommitEntry:
    request_id: int
    node_id: int
    y: int
    proof: bytes
    commit_hash: bytes
    at_block: int


@dataclass(frozen=True, slots=True)
class RevealEntry:
    request_id: int
    node_id: int
    output: bytes
    addr: bytes
    nonce: bytes


@dataclass
class TrainingProposal:
    pid: int
    update: ModelUpdate
    submitted_at: int
    agreed_score: Optional[int] = None
    accepted: Optional[bool] = None


# tx payloads ---------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class CommitPayload:
    request_id: int
    node_id: int
    msg: SortitionMsg
    y: int
    proof: bytes
    commit_hash: bytes
    seed_y: int
    seed_proof: bytes


@dataclass(frozen=True, slots=True)
class RevealPayload:
    request_id: int
    node_id: int
    output: bytes
    addr: bytes
    nonce: bytes


@dataclass(frozen=True, slots=True)
class SuggestPayload:
    update: ModelUpdate


@dataclass(frozen=True, slots=True)
class ScoreCommitPayload:
    proposal_id: int
    node_id: int
    msg: SortitionMsg
    y: int
    proof: bytes
    commit_hash: bytes
    seed_y: int
    seed_proof: bytes


@dataclass(frozen=True, slots=True)
class ScoreRevealPayload:
    proposal_id: int
    node_id: int
    score: int
    addr: bytes
    nonce: bytes


def score_bytes(score: int) -> bytes:
    return score.to_bytes(4, "big")


# ---------------------------------------------------------------------------
# priority queue with lazy deletion


class RequestQueue:
    """Max-priority queue over request ids; FIFO among equal priorities."""

    def __init__(self):
        self._heap: list[tuple[int, int, int]] = []
        self._seq = 0
        self._key: dict[int, tuple[int, int]] = {}

    def push(self, req_id: int, priority: int) -> None:
        self._seq += 1
        entry = (-priority, self._seq, req_id)
        self._key[req_id] = entry[:2]
        heapq.heappush(self._heap, entry)

    def update(self, req_id: int, priority: int) -> None:
        if req_id not in self._key:
            raise KeyError(req_id)
        self.push(req_id, priority)

    def remove(self, req_id: int) -> None:
        self._key.pop(req_id, None)

    def _settle(self) -> None:
        heap = self._heap
        while heap:
            neg, seq, rid = heap[0]
            if self._key.get(rid) == (neg, seq):
                return
            heapq.heappop(heap)

    def peek(self) -> Optional[int]:
        self._settle()
        return self._heap[0][2] if self._heap else None

    def pop(self) -> int:
        self._settle()
        if not self._heap:
            raise IndexError("pop from empty queue")
        _, _, rid = heapq.heappop(self._heap)
        del self._key[rid]
        return rid

    def __contains__(self, req_id: int) -> bool:
        return req_id in self._key

    def __len__(self) -> int:
        return len(self._key)


# ---------------------------------------------------------------------------
# the contract


class Contract:
    def __init__(
        self,
        params: HyperParams,
        log: Optional[EventLog] = None,
        meter: Optional[GasMeter] = None,
        weight_store: Optional[WeightStore] = None,
        genesis_seed: bytes = bytes(32),
        user_funds: int = 10 ** 12,
        treasury: int = 10 ** 9,
    ):
        self.params = params
        self.log = log if log is not None else EventLog()
        self.meter = meter if meter is not None else GasMeter()
        self.weight_store = weight_store if weight_store is not None else WeightStore()

        self.balances: dict = {USER_ACCOUNT: user_funds, APP_ACCOUNT: 0}
        self.deposits: dict[int, int] = {}
        self.treasury = treasury
        self.escrow: dict[int, int] = {}

        self.node_pk: dict[int, bytes] = {}
        self.active_nodes: set[int] = set()

        self.requests: dict[int, InferenceRequest] = {}
        self.queue = RequestQueue()
        self.head_id: Optional[int] = None
        self.head_since: int = -1
        self.commits: dict[int, dict[int, CommitEntry]] = {}
        self.reveals: dict[int, dict[int, RevealEntry]] = {}
        self.reveal_open: dict[int, int] = {}
        self.resolved: dict[int, str] = {}
        self._admitted = 0
        self._settled = 0

        self.seed_ring: list[bytes] = [genesis_seed]
        self.seed_round = 0

        # training track
        self.proposals: dict[int, TrainingProposal] = {}
        self.training_ring: deque[int] = deque()
        self.t_head_id: Optional[int] = None
        self.t_head_since: int = -1
        self.score_commits: dict[int, dict[int, CommitEntry]] = {}
        self.score_reveals: dict[int, dict[int, ScoreRevealPayload]] = {}
        self.t_reveal_open: dict[int, int] = {}
        self.t_resolved: dict[int, str] = {}

        self._deadlines: list[tuple[int, int, int, str, int]] = []
        self._dl_seq = 0
        self.block_events: list[tuple] = []

    # -- setup ---------------------------------------------------------

    def register_node(self, node_id: int, pubkey: bytes, deposit: Optional[int] = None) -> None:
        if node_id in self.node_pk:
            raise ValueError(f"node {node_id} already registered")
        self.node_pk[node_id] = pubkey
        self.deposits[node_id] = self.params.node_deposit if deposit is None else deposit
        self.balances.setdefault(node_id, 0)
        self.active_nodes.add(node_id)

    def total_assets(self) -> int:
        return (
            sum(self.balances.values())
            + sum(self.deposits.values())
            + sum(self.escrow.values())
            + self.treasury
        )

    def open_requests(self) -> int:
        return self._admitted - self._settled

    def take_events(self) -> list[tuple]:
        events, self.block_events = self.block_events, []
        return events

    def latest_seed(self) -> bytes:
        return self.seed_ring[-1]

    def sortition_seed(self) -> bytes:
        return lagged_seed(self.seed_ring, self.params.finality_lag)

    # -- tx dispatch ----------------------------------------------------

    def apply(self, tx: Tx, h: int) -> tuple[bool, str]:
        kind = tx.kind
        if kind == COMMIT:
            return self.commit(tx.payload, h)
        if kind == REVEAL:
            return self.reveal(tx.payload, h)
        if kind == REQUEST:
            return self.request_inference(tx.payload, h)
        if kind == SCORE_COMMIT:
            return self.score_commit(tx.payload, h)
        if kind == SCORE_REVEAL:
            return self.score_reveal(tx.payload, h)
        if kind == SUGGEST:
            return self.suggest_update(tx.payload, tx.sender, h)
        raise ValueError(f"unknown tx kind: {kind!r}")

    def _reject(self, h: int, kind: str, rid, nid, why: str) -> tuple[bool, str]:
        self.log.record(h, kind, rid, nid, f"rejected:{why}")
        return False, f"rejected:{why}"

    # -- phase 1: request -------------------------------------------------

    def request_inference(self, req: InferenceRequest, h: int) -> tuple[bool, str]:
        if req.id in self.requests:
            return self._reject(h, REQUEST, req.id, None, "duplicate")
        if len(req.input) > req.fee_limit:
            return self._reject(h, REQUEST, req.id, None, "input_exceeds_fee_limit")
        if not 0 <= req.priority < self.params.priority_max:
            return self._reject(h, REQUEST, req.id, None, "bad_priority")
        cost = req.fee_limit * req.fee_price + req.value
        if self.balances[USER_ACCOUNT] < cost:
            return self._reject(h, REQUEST, req.id, None, "insufficient_funds")

        self.balances[USER_ACCOUNT] -= cost
        self.escrow[req.id] = cost
        req.submitted_at = h
        self.requests[req.id] = req
        self.commits[req.id] = {}
        self.queue.push(req.id, req.priority)
        self._admitted += 1
        self._schedule(h + req.timeout + 1, req.id, "qt", h)
        self.meter.charge("push_prior")
        self.log.record(h, REQUEST, req.id, None, "queued")
        return True, "queued"

    # -- phase 2a: commit -------------------------------------------------

    def commit(self, p: CommitPayload, h: int) -> tuple[bool, str]:
        rid, nid = p.request_id, p.node_id
        if nid not in self.active_nodes:
            return self._reject(h, COMMIT, rid, nid, "unknown_node")
        req = self.requests.get(rid)
        if req is None or rid in self.resolved:
            return self._reject(h, COMMIT, rid, nid, "no_such_request")
        if self.head_id != rid or self.queue.peek() != rid:
            return self._reject(h, COMMIT, rid, nid, "not_head")
        entries = self.commits[rid]
        if nid in entries:
            return self._reject(h, COMMIT, rid, nid, "duplicate")

        epoch_lo = self.head_since // self.params.epoch_blocks
        epoch_hi = h // self.params.epoch_blocks
        ok = (
            epoch_lo <= p.msg.epoch_index <= epoch_hi
            and p.msg.request_digest == req.digest()
            and p.msg.seed == self.sortition_seed()
        )
        if not ok:
            return self._reject(h, COMMIT, rid, nid, "bad_msg")
        if not verify(self.node_pk[nid], p.msg.to_bytes(), p.y, p.proof):
            self._slash(nid, self.params.penalty_commit)
            return self._reject(h, COMMIT, rid, nid, "bad_proof")
        if not is_elected(p.y, self.params.difficulty):
            self._slash(nid, self.params.penalty_commit)
            return self._reject(h, COMMIT, rid, nid, "not_elected")

        if not entries:
            # first valid commit pins the request at the top of the queue
            self.queue.update(rid, self.params.priority_max)
        entries[nid] = CommitEntry(rid, nid, p.y, p.proof, p.commit_hash, h)
        self._pay(nid, self.params.reward_commit)
        self.meter.charge("verify_fast", "commit_h")
        if len(entries) < self.params.commit_quorum:
            self.log.record(h, COMMIT, rid, nid, "accepted")
            return True, "accepted"

        # quorum reached: close the commit phase and open reveals
        self.queue.remove(rid)
        self.head_id = None
        self.reveal_open[rid] = h
        self.reveals[rid] = {}
        self._advance_seed(p.seed_y, p.seed_proof, self.node_pk[nid])
        if self.params.reveal_timeout < NEVER:
            self._schedule(h + self.params.reveal_timeout + 1, rid, "rt", h)
        self.meter.charge("pop_prior")
        self.block_events.append(("reveal_open", rid, h))
        self.log.record(h, COMMIT, rid, nid, "quorum")
        return True, "quorum"

    def _advance_seed(self, seed_y: int, seed_proof: bytes, pk: bytes) -> None:
        nxt = self.seed_round + 1
        msg = seed_evolution_msg(self.latest_seed(), nxt)
        if verify(pk, msg, seed_y, seed_proof):
            new_seed = seed_y.to_bytes(32, "big")
        else:
            # stale basis (another round closed earlier in this block); fall
            # back to hash evolution rather than penalising the committer
            new_seed = hash256(msg)
        self._push_seed(new_seed)

    def _hash_advance_seed(self) -> None:
        nxt = self.seed_round + 1
        self._push_seed(hash256(seed_evolution_msg(self.latest_seed(), nxt)))

    def _push_seed(self, seed: bytes) -> None:
        self.seed_round += 1
        self.seed_ring.append(seed)
        keep = self.params.finality_lag + 1
        if len(self.seed_ring) > keep:
            del self.seed_ring[: len(self.seed_ring) - keep]

    # -- phase 2b: reveal + execute ----------------------------------------

    def reveal(self, p: RevealPayload, h: int) -> tuple[bool, str]:
        rid, nid = p.request_id, p.node_id
        if rid not in self.reveal_open:
            return self._reject(h, REVEAL, rid, nid, "phase_closed")
        committee = self.commits[rid]
        if nid not in committee:
            return self._reject(h, REVEAL, rid, nid, "not_committee")
        got = self.reveals[rid]
        if nid in got:
            return self._reject(h, REVEAL, rid, nid, "duplicate")
        if p.addr != node_addr(nid):
            return self._reject(h, REVEAL, rid, nid, "bad_addr")
        if commitment_hash(p.output, p.addr, p.nonce) != committee[nid].commit_hash:
            return self._reject(h, REVEAL, rid, nid, "hash_mismatch")

        got[nid] = RevealEntry(rid, nid, p.output, p.addr, p.nonce)
        self.meter.charge("reveal_h")
        if len(got) < self.params.reveal_quorum:
            self.log.record(h, REVEAL, rid, nid, "accepted")
            return True, "accepted"
        # quorum reveal triggers execution inside the same tx
        self._execute(rid, h, executor=nid)
        self.log.record(h, REVEAL, rid, nid, "executed")
        return True, "executed"

    @staticmethod
    def plurality(outputs: list[bytes]) -> bytes:
        counts: dict[bytes, int] = {}
        for out in outputs:
            counts[out] = counts.get(out, 0) + 1
        best = max(counts.values())
        tied = [out for out, c in counts.items() if c == best]
        if len(tied) == 1:
            return tied[0]
        return min(tied, key=hash256)

    def _execute(self, rid: int, h: int, executor: Optional[int]) -> None:
        req = self.requests[rid]
        got = self.reveals[rid]
        consensus = self.plurality([e.output for e in got.values()])
        winners = [nid for nid, e in got.items() if e.output == consensus]
        deviants = [nid for nid, e in got.items() if e.output != consensus]

        pot = self.escrow.pop(rid)
        fee = (len(req.input) + len(consensus)) * req.fee_price
        fee = min(fee, pot - req.value)
        share, rest = divmod(fee, len(winners))
        for nid in winners:
            self.balances[nid] += share
            self._pay(nid, self.params.reward_reveal)
        self.treasury += rest
        if executor is not None:
            self._pay(executor, self.params.reward_execute)
        for nid in deviants:
            self._slash(nid, self.params.penalty_reveal)
        self.balances[req.target] += req.value
        self.balances[USER_ACCOUNT] += pot - fee - req.value

        del self.reveal_open[rid]
        self.resolved[rid] = "executed"
        self._settled += 1
        self.log.tasks_completed += 1
        self.log.latencies.append(h - req.submitted_at)
        self.block_events.append(("executed", rid, consensus))

    # -- timeouts and fallbacks --------------------------------------------

    def _schedule(self, at_block: int, rid: int, kind: str, stamp: int) -> None:
        if at_block - stamp >= NEVER:
            return
        self._dl_seq += 1
        heapq.heappush(self._deadlines, (at_block, self._dl_seq, rid, kind, stamp))

    def check_commit_timeout(self, rid: int, h: int) -> bool:
        """Cancel a queued request whose commit quorum never formed."""
        if rid in self.resolved or rid in self.reveal_open:
            return False
        if len(self.commits[rid]) >= self.params.commit_quorum:
            return False
        self._cancel(rid, h, "timeout")
        return True

    def check_reveal_timeout(self, rid: int, h: int) -> bool:
        """Resolve a request whose reveal quorum never formed."""
        if rid not in self.reveal_open:
            return False
        if len(self.reveals[rid]) >= self.params.reveal_quorum:
            return False
        for nid in self.commits[rid]:
            if nid not in self.reveals[rid]:
                self._slash(nid, self.params.penalty_reveal)
        if self.params.fallback == "requeue":
            self._requeue(rid, h)
        elif self.reveals[rid]:
            self._execute(rid, h, executor=None)
            self.log.record(h, "execute", rid, None, "executed_partial")
        else:
            del self.reveal_open[rid]
            self._refund_cancel(rid)
            self.resolved[rid] = "cancelled"
            self._settled += 1
            self.log.timeouts += 1
            self.log.record(h, "timeout", rid, None, "cancelled_empty")
            self.block_events.append(("cancelled", rid))
        return True

    def _requeue(self, rid: int, h: int) -> None:
        req = self.requests[rid]
        del self.reveal_open[rid]
        self.commits[rid] = {}
        self.reveals.pop(rid, None)
        req.submitted_at = h
        req.priority = self.params.priority_max - 1
        self.queue.push(rid, req.priority)
        self._schedule(h + req.timeout + 1, rid, "qt", h)
        self.log.record(h, "requeue", rid, None, "requeued")
        self.block_events.append(("requeued", rid))

    def _refund_cancel(self, rid: int) -> None:
        req = self.requests[rid]
        pot = self.escrow.pop(rid)
        kept = len(req.input) * req.fee_price
        self.treasury += kept
        self.balances[USER_ACCOUNT] += pot - kept
        self.commits[rid] = {}

    def _cancel(self, rid: int, h: int, reason: str) -> None:
        was_head = self.head_id == rid
        self.queue.remove(rid)
        if was_head:
            self.head_id = None
            self._hash_advance_seed()
        self._refund_cancel(rid)
        self.resolved[rid] = "timeout"
        self._settled += 1
        self.log.timeouts += 1
        self.log.record(h, "timeout", rid, None, reason)
        self.block_events.append(("cancelled", rid))

    # -- training track -----------------------------------------------------

    def suggest_update(self, p: SuggestPayload, sender, h: int) -> tuple[bool, str]:
        upd = p.update
        pid = upd.round
        if sender not in self.active_nodes or sender != upd.proposer:
            return self._reject(h, SUGGEST, pid, upd.proposer, "bad_proposer")
        if pid in self.proposals:
            return self._reject(h, SUGGEST, pid, upd.proposer, "duplicate")
        if len(self.training_ring) >= self.params.ring_capacity:
            return self._reject(h, SUGGEST, pid, upd.proposer, "ring_full")
        if upd.ver not in self.weight_store:
            return self._reject(h, SUGGEST, pid, upd.proposer, "unknown_version")

        self.proposals[pid] = TrainingProposal(pid, upd, h)
        self.training_ring.append(pid)
        self.score_commits[pid] = {}
        self._schedule(h + upd.timeout + 1, pid, "tqt", h)
        self.meter.charge("push")
        self.log.record(h, SUGGEST, pid, upd.proposer, "queued")
        return True, "queued"

    def score_commit(self, p: ScoreCommitPayload, h: int) -> tuple[bool, str]:
        pid, nid = p.proposal_id, p.node_id
        if nid not in self.active_nodes:
            return self._reject(h, SCORE_COMMIT, pid, nid, "unknown_node")
        prop = self.proposals.get(pid)
        if prop is None or pid in self.t_resolved:
            return self._reject(h, SCORE_COMMIT, pid, nid, "no_such_proposal")
        if self.t_head_id != pid:
            return self._reject(h, SCORE_COMMIT, pid, nid, "not_head")
        if nid == prop.update.proposer:
            return self._reject(h, SCORE_COMMIT, pid, nid, "proposer_excluded")
        entries = self.score_commits[pid]
        if nid in entries:
            return self._reject(h, SCORE_COMMIT, pid, nid, "duplicate")

        epoch_lo = self.t_head_since // self.params.training_epoch_blocks
        epoch_hi = h // self.params.training_epoch_blocks
        ok = (
            epoch_lo <= p.msg.epoch_index <= epoch_hi
            and p.msg.request_digest == prop.update.digest()
            and p.msg.seed == self.sortition_seed()
        )
        if not ok:
            return self._reject(h, SCORE_COMMIT, pid, nid, "bad_msg")
        if not verify(self.node_pk[nid], p.msg.to_bytes(), p.y, p.proof):
            self._slash(nid, self.params.penalty_commit)
            return self._reject(h, SCORE_COMMIT, pid, nid, "bad_proof")
        if not is_elected(p.y, self.params.training_difficulty):
            self._slash(nid, self.params.penalty_commit)
            return self._reject(h, SCORE_COMMIT, pid, nid, "not_elected")

        entries[nid] = CommitEntry(pid, nid, p.y, p.proof, p.commit_hash, h)
        self._pay(nid, self.params.reward_commit)
        self.meter.charge("verify_fast", "commit_h")
        quorum = min(self.params.commit_quorum, len(self.active_nodes) - 1)
        if len(entries) < quorum:
            self.log.record(h, SCORE_COMMIT, pid, nid, "accepted")
            return True, "accepted"

        self.training_ring.popleft()
        self.t_head_id = None
        self.t_reveal_open[pid] = h
        self.score_reveals[pid] = {}
        self._advance_seed(p.seed_y, p.seed_proof, self.node_pk[nid])
        if self.params.reveal_timeout < NEVER:
            self._schedule(h + self.params.reveal_timeout + 1, pid, "trt", h)
        self.meter.charge("pop")
        self.block_events.append(("score_reveal_open", pid, h))
        self.log.record(h, SCORE_COMMIT, pid, nid, "quorum")
        return True, "quorum"

    def score_reveal(self, p: ScoreRevealPayload, h: int) -> tuple[bool, str]:
        pid, nid = p.proposal_id, p.node_id
        if pid not in self.t_reveal_open:
            return self._reject(h, SCORE_REVEAL, pid, nid, "phase_closed")
        committee = self.score_commits[pid]
        if nid not in committee:
            return self._reject(h, SCORE_REVEAL, pid, nid, "not_committee")
        got = self.score_reveals[pid]
        if nid in got:
            return self._reject(h, SCORE_REVEAL, pid, nid, "duplicate")
        if not 0 <= p.score <= 10_000:
            return self._reject(h, SCORE_REVEAL, pid, nid, "score_range")
        if p.addr != node_addr(nid):
            return self._reject(h, SCORE_REVEAL, pid, nid, "bad_addr")
        if commitment_hash(score_bytes(p.score), p.addr, p.nonce) != committee[nid].commit_hash:
            return self._reject(h, SCORE_REVEAL, pid, nid, "hash_mismatch")

        got[nid] = p
        self.meter.charge("reveal_h")
        quorum = min(self.params.reveal_quorum, len(self.active_nodes) - 1)
        if len(got) < quorum:
            self.log.record(h, SCORE_REVEAL, pid, nid, "accepted")
            return True, "accepted"
        self.finalize_training(pid, h, executor=nid)
        self.log.record(h, SCORE_REVEAL, pid, nid, "finalized")
        return True, "finalized"

    @staticmethod
    def lower_median(scores: list[int]) -> int:
        ordered = sorted(scores)
        return ordered[(len(ordered) - 1) // 2]

    def finalize_training(self, pid: int, h: int, executor: Optional[int]) -> None:
        prop = self.proposals[pid]
        got = self.score_reveals[pid]
        agreed = self.lower_median([p.score for p in got.values()])
        prop.agreed_score = agreed

        for nid in got:
            self._pay(nid, self.params.reward_reveal)
        if executor is not None:
            self._pay(executor, self.params.reward_update)
        if agreed >= self.params.score_threshold:
            prop.accepted = True
            self._pay(prop.update.proposer, self.params.reward_suggest)
            self.block_events.append(("update_accepted", pid, prop.update.ver, agreed))
        else:
            prop.accepted = False
            self._slash(prop.update.proposer, self.params.penalty_suggest)
            self.block_events.append(("update_rejected", pid, prop.update.ver, agreed))

        del self.t_reveal_open[pid]
        self.t_resolved[pid] = "finalized"

    def _training_commit_timeout(self, pid: int, h: int) -> bool:
        if pid in self.t_resolved or pid in self.t_reveal_open:
            return False
        quorum = min(self.params.commit_quorum, len(self.active_nodes) - 1)
        if len(self.score_commits[pid]) >= quorum:
            return False
        try:
            self.training_ring.remove(pid)
        except ValueError:
            pass
        if self.t_head_id == pid:
            self.t_head_id = None
            self._hash_advance_seed()
        self.t_resolved[pid] = "timeout"
        self.log.timeouts += 1
        self.log.record(h, "timeout", pid, None, "training_timeout")
        self.block_events.append(("proposal_cancelled", pid))
        return True

    def _training_reveal_timeout(self, pid: int, h: int) -> bool:
        if pid not in self.t_reveal_open:
            return False
        got = self.score_reveals[pid]
        quorum = min(self.params.reveal_quorum, len(self.active_nodes) - 1)
        if len(got) >= quorum:
            return False
        for nid in self.score_commits[pid]:
            if nid not in got:
                self._slash(nid, self.params.penalty_reveal)
        if got:
            self.finalize_training(pid, h, executor=None)
            self.log.record(h, "finalize", pid, None, "finalized_partial")
        else:
            del self.t_reveal_open[pid]
            self.t_resolved[pid] = "cancelled"
            self.log.timeouts += 1
            self.log.record(h, "timeout", pid, None, "training_cancelled")
            self.block_events.append(("proposal_cancelled", pid))
        return True

    # -- per-block housekeeping ----------------------------------------------

    def end_of_block(self, h: int) -> None:
        dl = self._deadlines
        while dl and dl[0][0] <= h:
            _, _, rid, kind, stamp = heapq.heappop(dl)
            if kind == "qt":
                req = self.requests.get(rid)
                if req is not None and req.submitted_at == stamp:
                    self.check_commit_timeout(rid, h)
            elif kind == "ct":
                if self.head_id == rid and self.head_since == stamp:
                    self.check_commit_timeout(rid, h)
            elif kind == "rt":
                if self.reveal_open.get(rid) == stamp:
                    self.check_reveal_timeout(rid, h)
            elif kind == "tqt":
                self._training_commit_timeout(rid, h)
            elif kind == "trt":
                if self.t_reveal_open.get(rid) == stamp:
                    self._training_reveal_timeout(rid, h)

        peek = self.queue.peek()
        if peek != self.head_id:
            self.head_id = peek
            if peek is not None:
                self.head_since = h
                self.block_events.append(("head", peek, h))
                if self.params.commit_timeout < NEVER:
                    self._schedule(h + self.params.commit_timeout + 1, peek, "ct", h)

        if self.t_head_id is None and self.training_ring:
            pid = self.training_ring[0]
            self.t_head_id = pid
            self.t_head_since = h
            self.block_events.append(("t_head", pid, h))

    # -- money helpers ---------------------------------------------------

    def _pay(self, node_id: int, amount: int) -> None:
        if amount <= 0:
            return
        amount = min(amount, self.treasury)
        self.treasury -= amount
        self.balances[node_id] += amount

    def _slash(self, node_id: int, amount: int) -> None:
        take = min(amount, self.deposits.get(node_id, 0))
        self.deposits[node_id] = self.deposits.get(node_id, 0) - take
        self.treasury += take
        if self.deposits[node_id] == 0:
            self.active_nodes.discard(node_id)
            self.block_events.append(("ejected", node_id))
