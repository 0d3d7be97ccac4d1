"""Off-chain node behaviour: sortition draws, inference work, commit/reveal
scheduling, and the local training loop.

The runtime watches contract events once per block (`observe`) and submits
transactions for every node it hosts.  Inference work for a request takes
`duration_s` wall seconds, so a node elected at block h lands its commit at
block h + max(1, ceil(duration / block_interval)).
"""
from __future__ import annotations

import math
import random
from typing import Optional

from .contract import (
    CommitPayload,
    Contract,
    RevealPayload,
    ScoreCommitPayload,
    ScoreRevealPayload,
    SuggestPayload,
    commitment_hash,
    node_addr,
    score_bytes,
    seed_evolution_msg,
)
from .federated import (
    LinearTask,
    ModelUpdate,
    ModelWeights,
    WmaState,
    local_score,
    mse,
    train_local,
    wma_step,
)
from .simchain import COMMIT, REVEAL, SCORE_COMMIT, SCORE_REVEAL, SUGGEST, Tx
from .sortition import build_msg, evaluate, expand_bytes, hash256, is_elected, keygen

HONEST = "honest"
NON_REVEALER = "non_revealer"
DEVIANT_REVEALER = "deviant_revealer"
LAZY_SCORER = "lazy_scorer"

BEHAVIORS = (HONEST, NON_REVEALER, DEVIANT_REVEALER, LAZY_SCORER)


def run_inference(req) -> bytes:
    """Deterministic stand-in for model execution; identical on every node."""
    out_len = int.from_bytes(req.args[:4], "big")
    seed = hash256(
        b"infer"
        + req.net.encode()
        + req.ver
        + req.input
        + req.seed.to_bytes(8, "big")
        + req.args
    )
    return expand_bytes(seed, out_len)


def flip_first_byte(data: bytes) -> bytes:
    return bytes([data[0] ^ 0xFF]) + data[1:]


class Node:
    __slots__ = ("id", "keypair", "behavior", "rng", "outputs", "wma", "_secret")

    def __init__(self, node_id: int, behavior: str = HONEST, key_seed: Optional[int] = None):
        if behavior not in BEHAVIORS:
            raise ValueError(f"unknown behavior: {behavior!r}")
        self.id = node_id
        self.behavior = behavior
        self.keypair = keygen(key_seed if key_seed is not None else 0x9E3779B1 * (node_id + 1))
        self.rng = random.Random(node_id * 7919 + 13)
        self.outputs: dict[int, bytes] = {}
        self.wma: Optional[WmaState] = None
        self._secret = hash256(b"node-secret" + self.keypair.sk)

    def nonce_for(self, digest: bytes) -> bytes:
        return hash256(self._secret + digest + b"nonce")

    def committed_value(self, req) -> bytes:
        out = self.outputs[req.id]
        if self.behavior == DEVIANT_REVEALER:
            return flip_first_byte(out)
        return out


class _Session:
    __slots__ = ("rid", "h_start", "elected", "committed")

    def __init__(self, rid: int, h_start: int):
        self.rid = rid
        self.h_start = h_start
        self.elected: dict[int, tuple] = {}
        self.committed: set[int] = set()


class TrainingPlan:
    """Round-robin proposer schedule for the federated training demo."""

    def __init__(
        self,
        task: LinearTask,
        target_rounds: int,
        proposers: list[int],
        steps: int = 15,
        lr: float = 0.05,
        update_timeout: int = 200,
        max_proposals: Optional[int] = None,
    ):
        self.task = task
        self.target_rounds = target_rounds
        self.proposers = proposers
        self.steps = steps
        self.lr = lr
        self.update_timeout = update_timeout
        self.max_proposals = max_proposals if max_proposals is not None else 2 * target_rounds
        self.next_pid = 0
        self.accepted_rounds = 0
        self.history: list[dict] = []

    def done(self) -> bool:
        return self.accepted_rounds >= self.target_rounds or self.next_pid >= self.max_proposals


class NodeRuntime:
    def __init__(
        self,
        contract: Contract,
        nodes: list[Node],
        block_interval_s: float,
        durations: Optional[dict[int, float]] = None,
        plan: Optional[TrainingPlan] = None,
        net: str = "m0",
    ):
        self.contract = contract
        self.nodes = nodes
        self.by_id = {n.id: n for n in nodes}
        self.block_s = block_interval_s
        self.durations = durations if durations is not None else {}
        self.plan = plan
        self.net = net
        self.chain = None

        self.session: Optional[_Session] = None
        self.t_session: Optional[_Session] = None
        self.pending: dict[int, list[tuple]] = {}
        self._scores: dict[tuple[int, int], int] = {}
        self._in_flight: Optional[tuple[int, int]] = None  # (pid, submitted block)

        if plan is not None:
            start = ModelWeights.zeros(plan.task.dim)
            for node in nodes:
                node.wma = WmaState.initial(start, contract.params.window_len)

    def attach(self, chain) -> None:
        self.chain = chain

    def pending_work(self) -> bool:
        return False

    # -- per-block hook ---------------------------------------------------

    def observe(self, h: int) -> None:
        c = self.contract
        if c.block_events:
            for ev in c.take_events():
                self._handle(ev, h)

        if self.session is not None and h > self.session.h_start:
            if h % c.params.epoch_blocks == 0:
                self._draw_inference(h)
        if self.t_session is not None and h > self.t_session.h_start:
            if h % c.params.training_epoch_blocks == 0:
                self._draw_training(h)

        todo = self.pending.pop(h, None)
        if todo:
            for entry in todo:
                if entry[0] == "c":
                    self._submit_commit(entry, h)
                else:
                    self._submit_score_commit(entry, h)

        if self.plan is not None:
            self._drive_training(h)

    # -- event handling ----------------------------------------------------

    def _handle(self, ev: tuple, h: int) -> None:
        tag = ev[0]
        if tag == "head":
            _, rid, at = ev
            self.session = _Session(rid, at)
            self._draw_inference(h)
        elif tag == "reveal_open":
            _, rid, _ = ev
            if self.session is not None and self.session.rid == rid:
                self.session = None
            self._send_reveals(rid, h)
        elif tag in ("cancelled", "requeued"):
            rid = ev[1]
            if self.session is not None and self.session.rid == rid:
                self.session = None
        elif tag == "t_head":
            _, pid, at = ev
            self.t_session = _Session(pid, at)
            self._draw_training(h)
        elif tag == "score_reveal_open":
            _, pid, _ = ev
            if self.t_session is not None and self.t_session.rid == pid:
                self.t_session = None
            self._send_score_reveals(pid, h)
        elif tag == "proposal_cancelled":
            pid = ev[1]
            if self.t_session is not None and self.t_session.rid == pid:
                self.t_session = None
            if self._in_flight is not None and self._in_flight[0] == pid:
                self._in_flight = None
        elif tag == "update_accepted":
            _, pid, ver, agreed = ev
            self._aggregate(pid, ver, agreed, h)
        elif tag == "update_rejected":
            _, pid, ver, agreed = ev
            self._finish_round(pid, ver, agreed, accepted=False, block=h)

    # -- inference side ------------------------------------------------------

    def _draw_inference(self, h: int) -> None:
        s = self.session
        c = self.contract
        req = c.requests.get(s.rid)
        if req is None:
            self.session = None
            return
        msg = build_msg(req.digest(), c.seed_ring, c.params.finality_lag, h, c.params.epoch_blocks)
        raw = msg.to_bytes()
        wait = max(1, math.ceil(self.durations.get(s.rid, 0.0) / self.block_s))
        for node in self.nodes:
            nid = node.id
            if nid in s.elected or nid not in c.active_nodes:
                continue
            out = evaluate(node.keypair.sk, raw)
            if not is_elected(out.y, c.params.difficulty):
                continue
            s.elected[nid] = (msg, out.y, out.proof)
            if s.rid not in node.outputs:
                node.outputs[s.rid] = run_inference(req)
                due = h + wait
            else:
                due = h + 1  # cached from an earlier session
            self.pending.setdefault(due - 1, []).append(("c", s.rid, s.h_start, nid))

    def _submit_commit(self, entry: tuple, h: int) -> None:
        _, rid, h_start, nid = entry
        s = self.session
        if s is None or s.rid != rid or s.h_start != h_start or nid in s.committed:
            return
        c = self.contract
        if nid not in c.active_nodes:
            return
        node = self.by_id[nid]
        req = c.requests[rid]
        msg, y, proof = s.elected[nid]
        value = node.committed_value(req)
        ch = commitment_hash(value, node_addr(nid), node.nonce_for(req.digest()))
        seed_out = evaluate(node.keypair.sk, seed_evolution_msg(c.latest_seed(), c.seed_round + 1))
        payload = CommitPayload(rid, nid, msg, y, proof, ch, seed_out.y, seed_out.proof)
        self.chain.submit(Tx(COMMIT, nid, payload, h, self.chain.params.base_tx_exec_us))
        s.committed.add(nid)

    def _send_reveals(self, rid: int, h: int) -> None:
        c = self.contract
        req = c.requests[rid]
        for nid in c.commits[rid]:
            node = self.by_id.get(nid)
            if node is None or node.behavior == NON_REVEALER:
                continue
            value = node.committed_value(req)
            payload = RevealPayload(rid, nid, value, node_addr(nid), node.nonce_for(req.digest()))
            self.chain.submit(Tx(REVEAL, nid, payload, h, self.chain.params.base_tx_exec_us))

    # -- training side -------------------------------------------------------

    def _draw_training(self, h: int) -> None:
        s = self.t_session
        c = self.contract
        prop = c.proposals.get(s.rid)
        if prop is None or s.rid in c.t_resolved:
            self.t_session = None
            return
        upd = prop.update
        msg = build_msg(upd.digest(), c.seed_ring, c.params.finality_lag, h, c.params.training_epoch_blocks)
        raw = msg.to_bytes()
        for node in self.nodes:
            nid = node.id
            if nid == upd.proposer or nid in s.elected or nid not in c.active_nodes:
                continue
            out = evaluate(node.keypair.sk, raw)
            if not is_elected(out.y, c.params.training_difficulty):
                continue
            s.elected[nid] = (msg, out.y, out.proof)
            self.pending.setdefault(h, []).append(("t", s.rid, s.h_start, nid))

    def _score_update(self, node: Node, upd: ModelUpdate) -> int:
        if node.behavior == LAZY_SCORER:
            return node.rng.randrange(0, 10_001)
        weights = self.contract.weight_store.fetch(upd.ver)
        return local_score(weights, self.plan.task, dataset_seed=node.id)

    def _submit_score_commit(self, entry: tuple, h: int) -> None:
        _, pid, h_start, nid = entry
        s = self.t_session
        if s is None or s.rid != pid or s.h_start != h_start or nid in s.committed:
            return
        c = self.contract
        if nid not in c.active_nodes:
            return
        node = self.by_id[nid]
        prop = c.proposals[pid]
        msg, y, proof = s.elected[nid]
        score = self._score_update(node, prop.update)
        self._scores[(pid, nid)] = score
        nonce = node.nonce_for(prop.update.digest())
        ch = commitment_hash(score_bytes(score), node_addr(nid), nonce)
        seed_out = evaluate(node.keypair.sk, seed_evolution_msg(c.latest_seed(), c.seed_round + 1))
        payload = ScoreCommitPayload(pid, nid, msg, y, proof, ch, seed_out.y, seed_out.proof)
        self.chain.submit(Tx(SCORE_COMMIT, nid, payload, h, self.chain.params.base_tx_exec_us))
        s.committed.add(nid)

    def _send_score_reveals(self, pid: int, h: int) -> None:
        c = self.contract
        prop = c.proposals[pid]
        for nid in c.score_commits[pid]:
            node = self.by_id.get(nid)
            if node is None or node.behavior == NON_REVEALER:
                continue
            score = self._scores.pop((pid, nid), None)
            if score is None:
                continue
            nonce = node.nonce_for(prop.update.digest())
            payload = ScoreRevealPayload(pid, nid, score, node_addr(nid), nonce)
            self.chain.submit(Tx(SCORE_REVEAL, nid, payload, h, self.chain.params.base_tx_exec_us))

    # -- training driver -------------------------------------------------------

    def _drive_training(self, h: int) -> None:
        plan = self.plan
        c = self.contract
        if self._in_flight is not None:
            pid, at = self._in_flight
            if pid in c.t_resolved:
                self._in_flight = None
            elif pid not in c.proposals and h > at + 5:
                self._in_flight = None  # proposal never admitted; allow a retry
            else:
                return
        if plan.done() or c.t_head_id is not None or c.training_ring:
            return

        pid = plan.next_pid
        plan.next_pid += 1
        proposer_id = plan.proposers[pid % len(plan.proposers)]
        proposer = self.by_id[proposer_id]
        trained = train_local(
            proposer.wma.global_weights,
            plan.task,
            dataset_seed=proposer_id,
            steps=plan.steps,
            lr=plan.lr,
        )
        ver = c.weight_store.store(trained)
        upd = ModelUpdate(self.net, ver, proposer_id, plan.update_timeout, pid)
        self.chain.submit(Tx(SUGGEST, proposer_id, SuggestPayload(upd), h, self.chain.params.base_tx_exec_us))
        self._in_flight = (pid, h)

    def _aggregate(self, pid: int, ver: bytes, agreed: int, block: int) -> None:
        weights = self.contract.weight_store.fetch(ver)
        blend = agreed / 10_000.0
        for node in self.nodes:
            node.wma = wma_step(node.wma, weights, blend)
        self._finish_round(pid, ver, agreed, accepted=True, block=block)

    def _finish_round(self, pid: int, ver: bytes, agreed: int, accepted: bool, block: int) -> None:
        plan = self.plan
        if plan is None:
            return
        if self._in_flight is not None and self._in_flight[0] == pid:
            self._in_flight = None
        prop = self.contract.proposals.get(pid)
        proposer = prop.update.proposer if prop is not None else None
        row = {
            "round": pid,
            "block": block,
            "proposer": proposer,
            "agreed_score": agreed,
            "accepted": accepted,
            "heldout_loss": None,
            "distinct_states": None,
        }
        if accepted:
            plan.accepted_rounds += 1
            digests = {node.wma.global_weights.to_bytes() for node in self.nodes}
            row["distinct_states"] = len(digests)
            any_state = self.nodes[0].wma.global_weights
            x_h, y_h = plan.task.heldout()
            row["heldout_loss"] = mse(any_state, x_h, y_h)
        plan.history.append(row)
