"""Label prior estimation from posteriorgram marginals or Viterbi label counts.

Accumulators are immutable values; ``merge`` combines per-worker statistics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyAccumulator, NotNormalized, ShapeMismatch
from .types import DEFAULT_PRIOR_FLOOR, Priors, emission_grid, validate_posteriorgram


@dataclass(frozen=True)
class PriorAccumulator:
    weights: np.ndarray
    total: float = 0.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ShapeMismatch("weights must be a vector")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "total", float(self.total))

    @classmethod
    def empty(cls, size: int) -> "PriorAccumulator":
        return cls(np.zeros(size), 0.0)

    @property
    def size(self) -> int:
        return self.weights.size


def accumulate_posteriorgram(acc: PriorAccumulator, p, tol: float = 1e-6) -> PriorAccumulator:
    """Add the per-label posterior mass of every frame of ``p``."""
    grid = emission_grid(p)
    if grid.shape[1] != acc.size:
        raise ShapeMismatch(f"{grid.shape[1]} columns, accumulator has {acc.size}")
    check = validate_posteriorgram(grid, expect_normalized=True, tol=tol)
    if not check.ok:
        raise NotNormalized(check.violations[0])
    return PriorAccumulator(acc.weights + np.exp(grid).sum(axis=0), acc.total + grid.shape[0])


def accumulate_viterbi(acc: PriorAccumulator, path: Sequence[int]) -> PriorAccumulator:
    """Add label counts from an alignment path."""
    path = np.asarray(path, dtype=np.int64)
    if path.size == 0:
        return acc
    if path.min() < 0 or path.max() >= acc.size:
        raise ShapeMismatch("path label out of range")
    counts = np.bincount(path, minlength=acc.size)
    return PriorAccumulator(acc.weights + counts, acc.total + path.size)


def merge(a: PriorAccumulator, b: PriorAccumulator) -> PriorAccumulator:
    if a.size != b.size:
        raise ShapeMismatch(f"cannot merge accumulators of size {a.size} and {b.size}")
    return PriorAccumulator(a.weights + b.weights, a.total + b.total)


def finalize(acc: PriorAccumulator, floor: float = DEFAULT_PRIOR_FLOOR,
             alpha: float = 0.0) -> Priors:
    """Normalize the statistics into priors, flooring each entry at ``floor``."""
    if acc.total <= 0:
        raise EmptyAccumulator("no frames accumulated")
    return Priors.from_probs(acc.weights / acc.total, alpha=alpha, floor=floor)


def update_schedule(epoch: int, current: Priors, new_estimate: Priors,
                    mode: str = "replace", gamma: float = 0.9) -> Priors:
    """Priors to use for the next epoch.

    Epoch 0 is always uniform. ``mode="ema"`` interpolates geometrically:
    ``gamma * log current + (1 - gamma) * log new``, renormalized.
    """
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    alpha = new_estimate.alpha
    if epoch == 0:
        return Priors.uniform(new_estimate.size, alpha)
    if mode == "replace":
        return new_estimate
    if mode == "ema":
        if current.size != new_estimate.size:
            raise ShapeMismatch("prior sizes differ")
        mixed = gamma * current.log_p + (1.0 - gamma) * new_estimate.log_p
        mixed = mixed - np.logaddexp.reduce(mixed)
        return Priors(mixed, alpha)
    raise ValueError(f"unknown update mode {mode!r}")
