"""Aggregator-free federated averaging.

Every node maintains its own copy of the global model as a score-weighted
moving average over accepted updates; there is no central aggregator. The
iterated update rule is

    M_r = (1 - alpha_r) * M_{r-1} + alpha_r * m_r,
    alpha_r = a_r / sum(last min(r+1, n) accepted scores, including a_r)

with a_0 = 1 and M_0 = m_0. `wma_direct` evaluates the same quantity
non-iteratively from the raw history (each update's effective weight is
a_i * prod_{j>i}(1 - alpha_j)) and serves as an independent oracle for
`wma_step`. Weight vectors travel through a content-addressed store keyed by
the hash of their serialized bytes, so a version id pins exact contents.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .sortition import hash256


@dataclass(frozen=True)
class ModelWeights:
    values: np.ndarray  # 1-D float64

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("weights must be a 1-D vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def zeros(cls, dim: int) -> "ModelWeights":
        return cls(values=np.zeros(dim))

    def to_bytes(self) -> bytes:
        return struct.pack("<Q", self.dim) + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ModelWeights":
        (dim,) = struct.unpack_from("<Q", raw)
        vec = np.frombuffer(raw, dtype="<f8", count=dim, offset=8)
        return cls(values=vec.copy())


@dataclass(frozen=True)
class ModelUpdate:
    net: str
    ver: bytes  # hash of the proposed weights
    proposer: int
    timeout: int
    round: int

    def digest(self) -> bytes:
        head = f"{self.net}|{self.proposer}|{self.round}|{self.timeout}|".encode()
        return hash256(head + self.ver)


class WeightStore:
    """In-memory content-addressed weight store with optional directory backing."""

    def __init__(self, directory: str | Path | None = None):
        self._mem: dict[bytes, bytes] = {}
        self._dir = Path(directory) if directory is not None else None
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)

    def store(self, weights: ModelWeights) -> bytes:
        raw = weights.to_bytes()
        ver = hash256(raw)
        self._mem[ver] = raw
        if self._dir is not None:
            (self._dir / ver.hex()).write_bytes(raw)
        return ver

    def fetch(self, ver: bytes) -> ModelWeights:
        raw = self._mem.get(ver)
        if raw is None and self._dir is not None:
            path = self._dir / ver.hex()
            if path.exists():
                raw = path.read_bytes()
                self._mem[ver] = raw
        if raw is None:
            raise KeyError(f"unknown weight version {ver.hex()}")
        return ModelWeights.from_bytes(raw)

    def __contains__(self, ver: bytes) -> bool:
        try:
            self.fetch(ver)
        except KeyError:
            return False
        return True


@dataclass(frozen=True)
class WmaState:
    global_weights: ModelWeights
    window: tuple[float, ...]  # last min(r+1, n) accepted scores, newest last
    round: int
    n: int

    @classmethod
    def initial(cls, m0: ModelWeights, n: int, a0: float = 1.0) -> "WmaState":
        if n < 2:
            raise ValueError("window size n must be >= 2")
        return cls(global_weights=m0, window=(float(a0),), round=0, n=n)


def wma_step(state: WmaState, m_r: ModelWeights, a_r: float) -> WmaState:
    """One weighted-moving-average round; returns the successor state."""
    if m_r.dim != state.global_weights.dim:
        raise ValueError(
            f"dimension mismatch: update {m_r.dim} vs global {state.global_weights.dim}"
        )
    if a_r <= 0:
        raise ValueError("score must be positive")
    window = (state.window + (float(a_r),))[-state.n :]
    alpha = float(a_r) / sum(window)
    blended = (1.0 - alpha) * state.global_weights.values + alpha * m_r.values
    return WmaState(
        global_weights=ModelWeights(blended),
        window=window,
        round=state.round + 1,
        n=state.n,
    )


def wma_direct(
    history: Sequence[tuple[ModelWeights, float]], n: int
) -> ModelWeights:
    """Direct (non-iterative) evaluation of the moving-average recursion.

    Update i carries effective weight a_i * prod_{j>i}(1 - alpha_j), where each
    alpha_j is computed from the raw score window ending at j. For n >= len
    this reduces to sum(a_i * m_i) / sum(a_i).
    """
    if not history:
        raise ValueError("history must be non-empty")
    scores = np.array([a for _, a in history], dtype=np.float64)
    r = len(history)
    alphas = np.empty(r, dtype=np.float64)
    alphas[0] = 1.0
    for i in range(1, r):
        lo = max(0, i - n + 1)
        alphas[i] = scores[i] / scores[lo : i + 1].sum()
    # suffix[i] = prod of (1 - alpha_j) for j > i
    suffix = np.ones(r, dtype=np.float64)
    for i in range(r - 2, -1, -1):
        suffix[i] = suffix[i + 1] * (1.0 - alphas[i + 1])
    weights = alphas * suffix
    models = np.stack([m.values for m, _ in history])
    return ModelWeights(weights @ models)


# ----- desk-scale training task (synthetic linear regression) -----


@dataclass(frozen=True)
class LinearTask:
    """Shared ground truth with per-node datasets: y = X @ w_true + noise."""

    dim: int = 16
    task_seed: int = 7
    n_samples: int = 128
    noise: float = 0.1

    def true_weights(self) -> np.ndarray:
        rng = np.random.default_rng(self.task_seed)
        return rng.normal(size=self.dim)

    def node_data(self, dataset_seed: int) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(dataset_seed)
        x = rng.normal(size=(self.n_samples, self.dim))
        y = x @ self.true_weights() + self.noise * rng.normal(size=self.n_samples)
        return x, y

    def heldout(self, n: int = 512) -> tuple[np.ndarray, np.ndarray]:
        # Noise-free targets: loss measures distance from the ground truth.
        rng = np.random.default_rng(self.task_seed + 1)
        x = rng.normal(size=(n, self.dim))
        return x, x @ self.true_weights()


def mse(weights: ModelWeights, x: np.ndarray, y: np.ndarray) -> float:
    err = x @ weights.values - y
    return float(err @ err / len(y))


def train_local(
    weights: ModelWeights,
    task: LinearTask,
    dataset_seed: int,
    steps: int,
    lr: float = 0.05,
) -> ModelWeights:
    """Full-batch gradient descent on the node's own synthetic dataset."""
    if steps == 0:
        return weights
    x, y = task.node_data(dataset_seed)
    w = weights.values.copy()
    for _ in range(steps):
        grad = 2.0 / len(y) * (x.T @ (x @ w - y))
        w -= lr * grad
    return ModelWeights(w)


def local_score(weights: ModelWeights, task: LinearTask, dataset_seed: int) -> int:
    """Evaluate update quality on the node's own data, in basis points 0..10000."""
    x, y = task.node_data(dataset_seed)
    var = float(y @ y / len(y))
    quality = 1.0 - mse(weights, x, y) / var
    return max(0, min(10000, int(round(quality * 10000))))
