"""Request stream generation: arrivals, priorities, durations, sizes.

Durations come from a log-normal truncated to the observed [min, max] range,
with mu calibrated by bisection against the closed-form truncated mean so the
sampler hits the target average, or from a replayed trace file (one decimal
duration per line, wrapping when exhausted).
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

DUR_MIN = 0.0975
DUR_MEAN = 18.5421
DUR_MAX = 50.6394


@dataclass
class WorkloadConfig:
    freq: float = 0.0577  # fraction of user txs that are inference requests
    n_requests: Optional[int] = 819  # None = unbounded
    trace_path: Optional[str] = None  # replay durations instead of sampling
    duration_min: float = DUR_MIN
    duration_mean: float = DUR_MEAN
    duration_max: float = DUR_MAX
    sigma: float = 1.0
    pareto_shape: float = 1.16
    timeout_default: int = 20
    input_len_range: tuple[int, int] = (64, 512)
    output_len_range: tuple[int, int] = (16, 256)

    def __post_init__(self):
        if not 0 <= self.freq < 1:
            raise ValueError("freq must be in [0, 1)")
        if not self.duration_min <= self.duration_mean <= self.duration_max:
            raise ValueError("duration bounds must satisfy min <= mean <= max")


def _phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def truncated_lognormal_mean(mu: float, sigma: float, lo: float, hi: float) -> float:
    """Closed-form mean of a log-normal conditioned on [lo, hi]."""
    a = (math.log(lo) - mu) / sigma
    b = (math.log(hi) - mu) / sigma
    mass = _phi(b) - _phi(a)
    if mass <= 0:
        raise ValueError("empty truncation interval")
    shifted = _phi(b - sigma) - _phi(a - sigma)
    return math.exp(mu + sigma * sigma / 2.0) * shifted / mass


@lru_cache(maxsize=64)
def calibrate_mu(
    target_mean: float, sigma: float, lo: float, hi: float, tol: float = 1e-10
) -> float:
    """Bisect mu so the truncated log-normal mean hits target_mean."""
    lo_mu, hi_mu = -2.0, 6.0
    if not (
        truncated_lognormal_mean(lo_mu, sigma, lo, hi)
        < target_mean
        < truncated_lognormal_mean(hi_mu, sigma, lo, hi)
    ):
        raise ValueError("target mean out of calibration bracket")
    for _ in range(200):
        mid = (lo_mu + hi_mu) / 2.0
        if truncated_lognormal_mean(mid, sigma, lo, hi) < target_mean:
            lo_mu = mid
        else:
            hi_mu = mid
        if hi_mu - lo_mu < tol:
            break
    return (lo_mu + hi_mu) / 2.0


def sample_priority(rng: random.Random, shape: float) -> int:
    """Heavy-tailed priority in 0..1000 from a Pareto(x_m=1, shape) draw."""
    if shape <= 0:
        raise ValueError("shape must be positive")
    x = rng.paretovariate(shape)
    return min(1000, int((x - 1.0) * 100.0))


class DurationSource:
    """Per-request inference durations: calibrated sampler or trace replay."""

    def __init__(self, cfg: WorkloadConfig):
        self.cfg = cfg
        self._trace: Optional[list[float]] = None
        self._trace_pos = 0
        if cfg.trace_path is not None:
            lines = Path(cfg.trace_path).read_text().split()
            self._trace = [float(v) for v in lines]
            if not self._trace:
                raise ValueError("empty duration trace")
        else:
            self._mu = calibrate_mu(
                cfg.duration_mean, cfg.sigma, cfg.duration_min, cfg.duration_max
            )

    def next(self, rng: random.Random) -> float:
        if self._trace is not None:
            d = self._trace[self._trace_pos % len(self._trace)]
            self._trace_pos += 1
            return d
        while True:
            d = rng.lognormvariate(self._mu, self.cfg.sigma)
            if self.cfg.duration_min <= d <= self.cfg.duration_max:
                return d


@dataclass
class RequestSpec:
    """Workload-side description of one inference request."""

    req_id: int
    priority: int
    duration_s: float
    input_len: int
    output_len: int
    fee_price: int
    fee_limit: int
    value: int
    timeout: int
    model_seed: int


@dataclass
class UserTxFeed:
    """Emits one user tx per tick: an inference request w.p. freq, else plain."""

    cfg: WorkloadConfig
    rng: random.Random
    emitted: int = 0
    _durations: DurationSource = field(init=False)

    def __post_init__(self):
        self._durations = DurationSource(self.cfg)

    def exhausted(self) -> bool:
        return self.cfg.n_requests is not None and self.emitted >= self.cfg.n_requests

    def next(self) -> Optional[RequestSpec]:
        """None means this tick's user tx is a plain transfer."""
        if self.exhausted() or self.rng.random() >= self.cfg.freq:
            return None
        rid = self.emitted
        self.emitted += 1
        priority = sample_priority(self.rng, self.cfg.pareto_shape)
        input_len = self.rng.randint(*self.cfg.input_len_range)
        output_len = self.rng.randint(*self.cfg.output_len_range)
        return RequestSpec(
            req_id=rid,
            priority=priority,
            duration_s=self._durations.next(self.rng),
            input_len=input_len,
            output_len=output_len,
            fee_price=1 + priority,
            fee_limit=input_len + 512,
            value=self.rng.randrange(0, 5),
            timeout=self.cfg.timeout_default,
            model_seed=self.rng.getrandbits(32),
        )


def sample_duration(cfg: WorkloadConfig, rng: random.Random) -> float:
    return DurationSource(cfg).next(rng)


def gen_stream(
    cfg: WorkloadConfig, rng: random.Random, n_user_txs: int
) -> list[tuple[int, Optional[RequestSpec]]]:
    """Materialize (tick, request-or-None) for n_user_txs ticks."""
    feed = UserTxFeed(cfg, rng)
    return [(tick, feed.next()) for tick in range(n_user_txs)]
