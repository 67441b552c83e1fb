"""Exhaustive enumeration over all ``K**T`` label paths.

These oracles deliberately avoid the lattice: feasibility is decided by
applying the collapse rule to every path, so they can check the dynamic
programs in ``loss`` and ``align``.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import OracleTooLarge, ZeroLikelihood
from .types import BLANK, Vocabulary, check_tokens, emission_grid

MAX_ORACLE_PATHS = 10**7


@lru_cache(maxsize=32)
def _all_paths(num_classes: int, num_frames: int) -> np.ndarray:
    grids = np.indices((num_classes,) * num_frames).reshape(num_frames, -1).T
    grids = np.ascontiguousarray(grids)
    grids.setflags(write=False)
    return grids


def enumerate_paths(num_classes: int, num_frames: int,
                    max_paths: int = MAX_ORACLE_PATHS) -> np.ndarray:
    """All label sequences of length ``num_frames``, one per row, in lexicographic order."""
    if num_classes ** num_frames > max_paths:
        raise OracleTooLarge(f"{num_classes}**{num_frames} paths exceeds {max_paths}")
    return _all_paths(num_classes, num_frames)


def emitted_mask(paths: np.ndarray) -> np.ndarray:
    """Frames that emit a new token under the collapse rule."""
    prev = np.concatenate([np.full((paths.shape[0], 1), -1), paths[:, :-1]], axis=1)
    return (paths != BLANK) & (paths != prev)


def feasible_paths(paths: np.ndarray, w: Sequence[int]) -> np.ndarray:
    """Boolean mask of rows whose collapse equals ``w``."""
    w = np.asarray(w, dtype=paths.dtype)
    keep = emitted_mask(paths)
    mask = keep.sum(axis=1) == w.size
    if mask.any() and w.size:
        rows = paths[mask][keep[mask]].reshape(-1, w.size)
        mask[mask] = np.all(rows == w, axis=1)
    return mask


def state_trajectories(paths: np.ndarray) -> np.ndarray:
    """Lattice state index of each frame for paths already known feasible.

    A frame emitting the j-th token (1-based) sits in state ``2j-1``; a blank
    after j tokens sits in state ``2j``; a repeat stays in the current state.
    """
    emitted = np.cumsum(emitted_mask(paths), axis=1)
    return np.where(paths == BLANK, 2 * emitted, 2 * emitted - 1)


def path_scores(grid: np.ndarray, paths: np.ndarray) -> np.ndarray:
    """Sum of frame scores along each path, accumulated left to right."""
    frame_scores = grid[np.arange(grid.shape[0]), paths]
    score = frame_scores[:, 0].copy()
    for t in range(1, grid.shape[0]):
        score += frame_scores[:, t]
    return score


def brute_force_loss(emissions, w: Sequence[int], vocab: Optional[Vocabulary] = None,
                     max_paths: int = MAX_ORACLE_PATHS) -> float:
    """Log of the summed scores of every path that collapses to ``w``."""
    grid = emission_grid(emissions)
    T, K = grid.shape
    w = check_tokens(w, vocab, size=K)
    paths = enumerate_paths(K, T, max_paths)
    mask = feasible_paths(paths, w)
    if not mask.any():
        raise ZeroLikelihood("no path of this length collapses to the transcript")
    total = float(logsumexp(path_scores(grid, paths[mask])))
    if total == -np.inf:
        raise ZeroLikelihood("all feasible paths have zero score")
    return total
