"""Training dynamics: LR schedules, dynamic mini-batch sizing, and
cross-mini-batch normalization statistics.

Detector-side training defaults live here: initial LR 0.01 decayed by 0.1
at steps 400k and 450k, momentum 0.9, weight decay 0.0005.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_INITIAL_LR = 0.01
DEFAULT_MILESTONES = (400_000, 450_000)
DEFAULT_DECAY_FACTOR = 0.1
DEFAULT_MOMENTUM = 0.9
DEFAULT_WEIGHT_DECAY = 0.0005


def cosine_lr(t: int, total_steps: int, lr_max: float, lr_min: float = 0.0) -> float:
    """Cosine annealing: lr_min + (lr_max - lr_min) * (1 + cos(pi t/T)) / 2."""
    if total_steps <= 0:
        raise ValueError(f"total_steps must be positive: {total_steps}")
    if not 0 <= t <= total_steps:
        raise ValueError(f"step {t} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t / total_steps))


def step_decay_lr(t: int, milestones: tuple[int, ...] = DEFAULT_MILESTONES,
                  lr0: float = DEFAULT_INITIAL_LR,
                  factor: float = DEFAULT_DECAY_FACTOR) -> float:
    """Piecewise-constant decay: lr0 * factor^(milestones passed by step t)."""
    if list(milestones) != sorted(milestones):
        raise ValueError(f"milestones must be sorted: {milestones}")
    passed = sum(1 for m in milestones if m <= t)
    return lr0 * factor**passed


def dynamic_minibatch(base_mb: int, base_res: int, current_res: int,
                      memory_cap_mb_at_base: int | None = None) -> int:
    """Mini-batch size that fills the same memory at a smaller resolution.

    Activation memory scales quadratically with resolution, so training at
    current_res < base_res fits floor(base_mb * (base_res/current_res)^2)
    samples in the budget that base_mb occupies at base_res (the optional
    memory_cap_mb_at_base documents that budget; the ratio already encodes
    it). Never returns less than base_mb.
    """
    for name, res in (("base_res", base_res), ("current_res", current_res)):
        if res <= 0 or res % 32 != 0:
            raise ValueError(f"{name} must be a positive multiple of 32: {res}")
    if base_mb < 1:
        raise ValueError(f"base_mb must be positive: {base_mb}")
    if memory_cap_mb_at_base is not None and memory_cap_mb_at_base <= 0:
        raise ValueError(f"memory cap must be positive: {memory_cap_mb_at_base}")
    scaled = math.floor(base_mb * (base_res / current_res) ** 2)
    return max(scaled, base_mb)


@dataclass(frozen=True)
class BatchStats:
    """Per-channel normalization statistics (population variance)."""

    mean: np.ndarray
    var: np.ndarray
    count: int


class CmBNAccumulator:
    """Accumulates normalization statistics across the mini-batches of one
    logical batch, resetting exactly at batch boundaries.

    Raw moments (sum x, sum x^2, n) are kept per channel, so the statistics
    returned at the final mini-batch telescope to exact whole-batch values.
    """

    def __init__(self, minibatches_per_batch: int):
        if minibatches_per_batch < 1:
            raise ValueError(
                f"minibatches_per_batch must be >= 1: {minibatches_per_batch}")
        self.minibatches_per_batch = minibatches_per_batch
        self._sum: np.ndarray | None = None
        self._sumsq: np.ndarray | None = None
        self._n = 0
        self._position = 0  # mini-batches seen in the current batch

    def reset(self):
        self._sum = None
        self._sumsq = None
        self._n = 0
        self._position = 0

    def update(self, minibatch: np.ndarray) -> BatchStats:
        """Fold one mini-batch in and return the statistics to normalize
        with: mean/variance over every sample seen so far in this batch.

        Accepts (n,) for a single channel or (n, channels).
        """
        x = np.asarray(minibatch, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError(f"minibatch must be nonempty (n,) or (n, C): {x.shape}")
        if self._sum is None:
            self._sum = np.zeros(x.shape[1])
            self._sumsq = np.zeros(x.shape[1])
        elif x.shape[1] != self._sum.shape[0]:
            raise ValueError(
                f"channel count changed mid-batch: {x.shape[1]} vs {self._sum.shape[0]}")
        self._sum += x.sum(axis=0)
        self._sumsq += (x * x).sum(axis=0)
        self._n += x.shape[0]
        self._position += 1

        mean = self._sum / self._n
        var = np.maximum(self._sumsq / self._n - mean * mean, 0.0)
        stats = BatchStats(mean=mean, var=var, count=self._n)
        if self._position >= self.minibatches_per_batch:
            self.reset()
        return stats
