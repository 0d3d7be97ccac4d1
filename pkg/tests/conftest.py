"""Shared fixtures.  The expensive multi-repetition experiment runs are
session-scoped so the throughput, latency and timeout tests share them.
"""
import pytest

from crchain.harness import ExperimentConfig, apply_axis, run_experiment

from drivers import FREQ_POINTS, QT_POINTS

REPS = 10


def _experiment(axis, value, seed):
    cfg = ExperimentConfig(label="fix", seed=seed, repetitions=REPS)
    return run_experiment(apply_axis(cfg, axis, value))


@pytest.fixture(scope="session")
def default_runs():
    """Ten repetitions at the default operating point (freq 0.0577)."""
    cfg = ExperimentConfig(label="fix", seed=500, repetitions=REPS)
    return run_experiment(cfg)


@pytest.fixture(scope="session")
def freq_runs():
    """Ten repetitions per request-frequency point."""
    return {f: _experiment("freq", f, seed=1000 + int(f * 10000)) for f in FREQ_POINTS}


@pytest.fixture(scope="session")
def qt_runs():
    """Ten repetitions per queue-timeout point."""
    return {qt: _experiment("timeout", qt, seed=700 + qt) for qt in QT_POINTS}


@pytest.fixture(scope="session")
def d253_runs():
    """Ten repetitions at lowered election difficulty, for both quorums."""
    out = {}
    for qc in (21, 10):
        cfg = ExperimentConfig(label="fix", seed=900 + qc, repetitions=REPS)
        cfg = apply_axis(cfg, "difficulty", 2 ** 253)
        out[qc] = run_experiment(apply_axis(cfg, "quorum", qc))
    return out
