"""Experiment harness: builds simulations, runs sweeps, writes result CSVs."""
from __future__ import annotations

import csv
import random
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .contract import APP_ACCOUNT, Contract, HyperParams, InferenceRequest, USER_ACCOUNT
from .economics import GasMeter
from .federated import LinearTask
from .noderuntime import LAZY_SCORER, Node, NodeRuntime, TrainingPlan
from .simchain import ChainParams, EventLog, InvariantViolation, REQUEST, SimChain, Tx
from .sortition import expand_bytes, hash256
from .workload import RequestSpec, UserTxFeed, WorkloadConfig

MODEL_VER = hash256(b"model:m0")

SWEEP_AXES = ("freq", "quorum", "difficulty", "timeout")

CSV_HEADER = [
    "config_id",
    "axis",
    "axis_value",
    "repetition",
    "seed",
    "tasks_per_second",
    "timeouts",
    "latency_min",
    "latency_avg",
    "latency_max",
    "total_gas",
]


@dataclass
class ExperimentConfig:
    label: str = "default"
    seed: int = 42
    n_nodes: int = 21
    repetitions: int = 10
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    hyper: HyperParams = field(default_factory=HyperParams)
    chain: ChainParams = field(default_factory=ChainParams)


@dataclass
class RunResult:
    seed: int
    blocks: int
    tasks_completed: int
    tasks_per_second: float
    timeouts: int
    latency_min: int
    latency_avg: float
    latency_max: int
    total_gas: int
    conserved: bool
    wall_s: float
    log: Optional[EventLog] = None
    contract: Optional[Contract] = None


def request_from_spec(spec: RequestSpec) -> InferenceRequest:
    material = hash256(
        b"input" + spec.req_id.to_bytes(8, "big") + spec.model_seed.to_bytes(8, "big")
    )
    return InferenceRequest(
        id=spec.req_id,
        net="m0",
        ver=MODEL_VER,
        input=expand_bytes(material, spec.input_len),
        seed=spec.model_seed,
        args=spec.output_len.to_bytes(4, "big"),
        target=APP_ACCOUNT,
        funcsig=bytes(4),
        value=spec.value,
        timeout=spec.timeout,
        fee_price=spec.fee_price,
        fee_limit=spec.fee_limit,
        priority=spec.priority,
    )


def build_simulation(cfg: ExperimentConfig, seed: Optional[int] = None):
    """Wire feed, contract, nodes and chain; returns the chain (fully attached)."""
    run_seed = cfg.seed if seed is None else seed
    feed = UserTxFeed(cfg.workload, random.Random(run_seed))
    log = EventLog()
    contract = Contract(cfg.hyper, log, GasMeter())
    nodes = [Node(i) for i in range(cfg.n_nodes)]
    for node in nodes:
        contract.register_node(node.id, node.keypair.pk)

    durations: dict[int, float] = {}
    runtime = NodeRuntime(contract, nodes, cfg.chain.block_interval_s, durations)

    def build_request_tx(spec: RequestSpec, h: int) -> Tx:
        durations[spec.req_id] = spec.duration_s
        req = request_from_spec(spec)
        return Tx(REQUEST, USER_ACCOUNT, req, h, cfg.chain.base_tx_exec_us, spec.fee_price)

    chain = SimChain(cfg.chain, contract, runtime, feed, log, build_request_tx)
    runtime.attach(chain)
    return chain


def tasks_per_second(log: EventLog) -> float:
    """Completed tasks per simulated second of execution-engine time."""
    if log.accepted_exec_us == 0:
        return 0.0
    return log.tasks_completed * 1e6 / log.accepted_exec_us


def latency_stats(log: EventLog) -> tuple[int, float, int]:
    """(min, mean, max) request latency in blocks, over executed requests."""
    lat = log.latencies
    if not lat:
        return 0, 0.0, 0
    return min(lat), sum(lat) / len(lat), max(lat)


def naive_baseline(cfg: ExperimentConfig, seed: Optional[int] = None) -> float:
    """Throughput of a chain that runs each inference inline, no pipelining.

    Replays the same user-tx stream as the pipelined run for the same seed.
    """
    run_seed = cfg.seed if seed is None else seed
    feed = UserTxFeed(cfg.workload, random.Random(run_seed))
    base_us = cfg.chain.base_tx_exec_us
    tasks = 0
    total_us = 0
    while not feed.exhausted():
        spec = feed.next()
        tasks += 1
        total_us += base_us if spec is None else round(spec.duration_s * 1e6)
    if total_us == 0:
        return 0.0
    return tasks * 1e6 / total_us


def run_single(
    cfg: ExperimentConfig,
    seed: Optional[int] = None,
    until: Optional[int] = None,
    keep: bool = False,
) -> RunResult:
    chain = build_simulation(cfg, seed)
    assets_before = chain.contract.total_assets()
    t0 = time.perf_counter()
    log = chain.run(until=until)
    wall = time.perf_counter() - t0
    conserved = chain.contract.total_assets() == assets_before
    lat_min, lat_avg, lat_max = latency_stats(log)
    return RunResult(
        seed=cfg.seed if seed is None else seed,
        blocks=chain.height,
        tasks_completed=log.tasks_completed,
        tasks_per_second=tasks_per_second(log),
        timeouts=log.timeouts,
        latency_min=lat_min,
        latency_avg=lat_avg,
        latency_max=lat_max,
        total_gas=chain.contract.meter.total,
        conserved=conserved,
        wall_s=wall,
        log=log if keep else None,
        contract=chain.contract if keep else None,
    )


def run_experiment(cfg: ExperimentConfig, keep: bool = False) -> list[RunResult]:
    return [run_single(cfg, seed=cfg.seed + i, keep=keep) for i in range(cfg.repetitions)]


def apply_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "freq":
        return replace(cfg, workload=replace(cfg.workload, freq=float(value)))
    if axis == "quorum":
        qc = int(value)
        qr = min(cfg.hyper.reveal_quorum, qc)
        return replace(cfg, hyper=replace(cfg.hyper, commit_quorum=qc, reveal_quorum=qr))
    if axis == "difficulty":
        return replace(cfg, hyper=replace(cfg.hyper, difficulty=int(value)))
    if axis == "timeout":
        return replace(cfg, workload=replace(cfg.workload, timeout_default=int(value)))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def format_axis_value(axis: str, value) -> str:
    if axis == "difficulty":
        v = int(value)
        if v > 0 and v & (v - 1) == 0:
            return f"2^{v.bit_length() - 1}"
        return str(v)
    return str(value)


def sweep_rows(cfg: ExperimentConfig, axis: str, value, results: list[RunResult]) -> list[list]:
    """Per-repetition rows plus mean/std aggregate rows for one axis point."""
    config_id = f"{cfg.label}:{axis}={format_axis_value(axis, value)}"
    axis_value = float(value) if axis == "freq" else int(value)
    rows = []
    for i, r in enumerate(results):
        rows.append(
            [
                config_id,
                axis,
                axis_value,
                i,
                r.seed,
                r.tasks_per_second,
                r.timeouts,
                r.latency_min,
                r.latency_avg,
                r.latency_max,
                r.total_gas,
            ]
        )

    def column(get):
        return [get(r) for r in results]

    def agg(name, reduce):
        return [
            config_id,
            axis,
            axis_value,
            name,
            "",
            reduce(column(lambda r: r.tasks_per_second)),
            reduce(column(lambda r: float(r.timeouts))),
            reduce(column(lambda r: float(r.latency_min))),
            reduce(column(lambda r: r.latency_avg)),
            reduce(column(lambda r: float(r.latency_max))),
            reduce(column(lambda r: float(r.total_gas))),
        ]

    def std(vals):
        return statistics.stdev(vals) if len(vals) > 1 else 0.0

    rows.append(agg("mean", statistics.fmean))
    rows.append(agg("std", std))
    return rows


def run_sweep(
    cfg: ExperimentConfig,
    axis: str,
    values: list,
    out_path: Optional[str] = None,
) -> list[list]:
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    rows = []
    for value in values:
        point_cfg = apply_axis(cfg, axis, value)
        results = run_experiment(point_cfg)
        if not all(r.conserved for r in results):
            raise InvariantViolation(f"asset conservation violated at {axis}={value}")
        rows.extend(sweep_rows(point_cfg, axis, value, results))
    if out_path is not None:
        write_csv(out_path, rows)
    return rows


def write_csv(path: str, rows: list[list], header: Optional[list[str]] = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER if header is None else header)
        writer.writerows(rows)


# -- federated training demo -------------------------------------------------


FL_HEADER = [
    "round",
    "block",
    "proposer",
    "agreed_score",
    "accepted",
    "heldout_loss",
    "distinct_states",
]


def run_fl_demo(
    n_nodes: int = 21,
    rounds: int = 50,
    dim: int = 16,
    window: int = 4,
    seed: int = 1,
    lazy_nodes: int = 0,
    steps: int = 15,
    lr: float = 0.05,
    hyper: Optional[HyperParams] = None,
    out_path: Optional[str] = None,
):
    """Run round-robin federated training; returns (plan, contract, chain)."""
    if hyper is None:
        hyper = HyperParams(training_difficulty=2 ** 256 - 1, window_len=window)
    log = EventLog()
    contract = Contract(hyper, log, GasMeter())
    nodes = []
    for i in range(n_nodes):
        behavior = LAZY_SCORER if i >= n_nodes - lazy_nodes else "honest"
        nodes.append(Node(i, behavior=behavior, key_seed=seed * 1_000_003 + i))
    for node in nodes:
        contract.register_node(node.id, node.keypair.pk)

    task = LinearTask(dim=dim, task_seed=seed + 6)
    plan = TrainingPlan(task, rounds, proposers=[n.id for n in nodes], steps=steps, lr=lr)
    runtime = NodeRuntime(contract, nodes, ChainParams().block_interval_s, plan=plan)
    chain = SimChain(ChainParams(), contract, runtime, feed=None, log=log)
    runtime.attach(chain)

    assets_before = contract.total_assets()
    horizon = 8 * plan.max_proposals + 50
    h = 0
    while not plan.done() and h < horizon:
        chain.run(until=h + 8)
        h += 8
    if contract.total_assets() != assets_before:
        raise InvariantViolation("asset conservation violated in training demo")

    if out_path is not None:
        rows = [
            [
                r["round"],
                r["block"],
                r["proposer"],
                r["agreed_score"],
                int(r["accepted"]),
                "" if r["heldout_loss"] is None else r["heldout_loss"],
                "" if r["distinct_states"] is None else r["distinct_states"],
            ]
            for r in plan.history
        ]
        write_csv(out_path, rows, header=FL_HEADER)
    return plan, contract, chain
