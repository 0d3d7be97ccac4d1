"""Deterministic simulator and protocol library for committee-verified
on-chain inference and federated training."""

from .contract import Contract, HyperParams, InferenceRequest
from .harness import (
    ExperimentConfig,
    RunResult,
    build_simulation,
    latency_stats,
    naive_baseline,
    run_fl_demo,
    run_single,
    run_sweep,
    tasks_per_second,
)
from .simchain import ChainParams, EventLog, InvariantViolation, SimChain
from .sortition import build_msg, evaluate, is_elected, keygen, verify
from .workload import WorkloadConfig

__version__ = "0.1.0"

__all__ = [
    "ChainParams",
    "Contract",
    "EventLog",
    "ExperimentConfig",
    "HyperParams",
    "InferenceRequest",
    "InvariantViolation",
    "RunResult",
    "SimChain",
    "WorkloadConfig",
    "build_msg",
    "build_simulation",
    "evaluate",
    "is_elected",
    "keygen",
    "latency_stats",
    "naive_baseline",
    "run_fl_demo",
    "run_single",
    "run_sweep",
    "tasks_per_second",
    "verify",
    "__version__",
]
