"""CTC loss with label priors, computed by log-domain forward-backward.

With priors, each frame score becomes ``log y[t, k] - alpha * log P(k)``.
These adjusted scores are no longer normalized, so the all-paths total can
exceed one; the dynamic program does not care.

Table convention: both ``log_alpha[t, s]`` and ``log_beta[t, s]`` include the
emission of state ``s`` at frame ``t``. State occupancy is therefore
``log_alpha + log_beta - emission - log_likelihood``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import InfeasibleLength, ShapeMismatch, ZeroLikelihood
from .lattice import ExpandedSequence, expand_labels, min_feasible_T
from .types import BLANK, Posteriorgram, Priors, Vocabulary, emission_grid

NEG_INF = -np.inf


def adjusted_emissions(p, priors: Optional[Priors], blank_only: bool = False) -> Posteriorgram:
    """Divide frame posteriors by ``P(k)**alpha`` (a subtraction in log space).

    With ``blank_only`` the penalty is applied to the blank column alone.
    """
    grid = emission_grid(p)
    meta = {}
    if isinstance(p, Posteriorgram):
        meta = dict(frame_shift_ms=p.frame_shift_ms, utt_id=p.utt_id)
    if priors is None or priors.alpha == 0.0:
        return Posteriorgram(grid, normalized=getattr(p, "normalized", False), **meta)
    if priors.size != grid.shape[1]:
        raise ShapeMismatch(
            f"priors have {priors.size} entries, grid has {grid.shape[1]} columns")
    penalty = priors.alpha * priors.log_p
    if blank_only:
        penalty = np.where(np.arange(priors.size) == BLANK, penalty, 0.0)
    return Posteriorgram(grid - penalty, normalized=False, **meta)


@dataclass(frozen=True)
class ForwardBackwardTables:
    log_alpha: np.ndarray
    log_beta: np.ndarray
    log_likelihood: float
    emissions: np.ndarray  # T x S adjusted score of each lattice state

    def log_occupancy(self) -> np.ndarray:
        """Log posterior mass of the all-paths total through each (t, s)."""
        with np.errstate(invalid="ignore"):
            occ = self.log_alpha + self.log_beta - self.emissions - self.log_likelihood
        return np.where(np.isneginf(self.emissions), NEG_INF, occ)


def _check_lengths(num_frames: int, lattice: ExpandedSequence):
    need = min_feasible_T(lattice.tokens)
    if num_frames < need:
        raise InfeasibleLength(f"{num_frames} frames, transcript needs at least {need}")


def ctc_forward_backward(emissions, lattice: ExpandedSequence) -> ForwardBackwardTables:
    """Sum over every lattice path of the summed frame scores, in log space."""
    grid = emission_grid(emissions)
    T = grid.shape[0]
    _check_lengths(T, lattice)
    S = lattice.num_states
    e = grid[:, lattice.states]
    skip = lattice.skip_allowed

    log_alpha = np.full((T, S), NEG_INF)
    log_alpha[0, :2] = e[0, :2]
    for t in range(1, T):
        prev = log_alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        log_alpha[t] = acc + e[t]

    log_beta = np.full((T, S), NEG_INF)
    log_beta[T - 1, -2:] = e[T - 1, -2:]
    for t in range(T - 2, -1, -1):
        nxt = log_beta[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        log_beta[t] = acc + e[t]

    ll = float(np.logaddexp(log_alpha[T - 1, -1], log_alpha[T - 1, -2]))
    if ll == NEG_INF:
        raise ZeroLikelihood("all feasible paths have zero score")
    if np.isnan(ll):
        raise ZeroLikelihood("forward pass produced NaN")
    return ForwardBackwardTables(log_alpha, log_beta, ll, e)


@dataclass(frozen=True)
class LossResult:
    loss: float
    log_likelihood: float
    tables: ForwardBackwardTables


def _lattice_for(w, vocab) -> ExpandedSequence:
    if isinstance(w, ExpandedSequence):
        return w
    return expand_labels(w, vocab)


def ctc_loss_from_posteriorgram(p, w: Sequence[int], priors: Optional[Priors] = None,
                                vocab: Optional[Vocabulary] = None) -> LossResult:
    """Loss on already-normalized log posteriors; no gradient (decode-time use)."""
    lattice = _lattice_for(w, vocab)
    tables = ctc_forward_backward(adjusted_emissions(p, priors), lattice)
    return LossResult(-tables.log_likelihood, tables.log_likelihood, tables)


def ctc_loss_with_priors(logits, w: Sequence[int], priors: Optional[Priors] = None,
                         vocab: Optional[Vocabulary] = None) -> LossResult:
    """Negative log of the prior-weighted all-paths score, from raw logits."""
    u = emission_grid(logits)
    return ctc_loss_from_posteriorgram(log_softmax(u, axis=1), w, priors, vocab)


def ctc_loss_and_grad(logits, w: Sequence[int], priors: Optional[Priors] = None,
                      vocab: Optional[Vocabulary] = None):
    """Return ``(LossResult, dloss/dlogits)``.

    The gradient is ``softmax(u) - occupancy``, where ``softmax(u)`` is the
    plain posterior and the occupancy of label ``k`` at frame ``t`` is summed
    over every lattice state carrying ``k`` under the prior-adjusted scores.
    """
    u = emission_grid(logits)
    lattice = _lattice_for(w, vocab)
    result = ctc_loss_from_posteriorgram(log_softmax(u, axis=1), lattice, priors)
    occ = np.exp(result.tables.log_occupancy())
    grad = softmax(u, axis=1)
    target = np.zeros_like(grad)
    np.add.at(target.T, lattice.states, occ.T)
    return result, grad - target


def ctc_grad(logits, w: Sequence[int], priors: Optional[Priors] = None,
             vocab: Optional[Vocabulary] = None) -> np.ndarray:
    """Gradient of the prior-augmented CTC loss w.r.t. the logits."""
    return ctc_loss_and_grad(logits, w, priors, vocab)[1]
