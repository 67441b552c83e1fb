"""Viterbi forced alignment with optional label priors and decode constraints."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InfeasibleLength, NoFeasiblePath, UnsegmentableTranscript
from .lattice import expand_labels, min_feasible_T
from .loss import adjusted_emissions
from .oracles import (
    MAX_ORACLE_PATHS,
    enumerate_paths,
    feasible_paths,
    path_scores,
    state_trajectories,
)
from .types import (
    Lexicon,
    Posteriorgram,
    Priors,
    TokenSpan,
    Vocabulary,
    WordSpan,
    check_tokens,
    emission_grid,
)

# scores this close count as equal, so summation order cannot break a tie
TIE_TOL = 1e-10


def _beats(challenger, incumbent):
    incumbent = np.asarray(incumbent, dtype=float)
    margin = np.where(np.isfinite(incumbent), TIE_TOL * (1.0 + np.abs(incumbent)), 0.0)
    return challenger > incumbent + margin


@dataclass(frozen=True)
class AlignConstraints:
    """Decode-time options.

    use_priors_at_decode: divide posteriors by the priors during the search.
    blank_only_penalty: apply the prior penalty to the blank column only.
    forbid_intra_word_blanks: no blank frames between tokens of one word
        (needs a lexicon).
    """

    use_priors_at_decode: bool = True
    blank_only_penalty: bool = False
    forbid_intra_word_blanks: bool = False


@dataclass(frozen=True)
class AlignmentResult:
    best_path: Tuple[int, ...]
    state_path: Tuple[int, ...]
    log_score: float
    spans: Tuple[TokenSpan, ...]
    confidences: Tuple[float, ...] = ()
    utt_id: str = "utt"
    words: Tuple[str, ...] = field(default=())

    @property
    def num_blank_frames(self) -> int:
        return sum(1 for s in self.state_path if s % 2 == 0)


def segment_transcript(w: Sequence[int], lexicon: Lexicon) -> List[str]:
    """Split a token sequence into lexicon words, preferring longer words first."""
    w = tuple(w)
    by_first = {}
    for word, seq in sorted(lexicon.entries.items(), key=lambda kv: (-len(kv[1]), kv[0])):
        by_first.setdefault(seq[0], []).append((word, seq))
    dead = set()

    def search(pos):
        if pos == len(w):
            return []
        if pos in dead:
            return None
        for word, seq in by_first.get(w[pos], ()):
            if w[pos:pos + len(seq)] == seq:
                rest = search(pos + len(seq))
                if rest is not None:
                    return [word] + rest
        dead.add(pos)
        return None

    words = search(0)
    if words is None:
        raise UnsegmentableTranscript("transcript cannot be split into lexicon words")
    return words


def _prepare(p, w, priors, constraints, lexicon, words, vocab):
    constraints = constraints or AlignConstraints()
    grid = emission_grid(p)
    w = check_tokens(w, vocab, size=grid.shape[1])
    word_lengths = None
    if constraints.forbid_intra_word_blanks:
        if lexicon is None:
            raise UnsegmentableTranscript("intra-word blank constraint needs a lexicon")
        if words is None:
            words = segment_transcript(w, lexicon)
        ids, word_lengths = lexicon.expand(words)
        if ids != w:
            raise UnsegmentableTranscript("words do not spell the transcript")
    elif words is not None and lexicon is not None:
        word_lengths = lexicon.expand(words)[1]
    lattice = expand_labels(w, vocab, word_lengths)
    if grid.shape[0] < min_feasible_T(w):
        raise InfeasibleLength(f"{grid.shape[0]} frames, transcript needs {min_feasible_T(w)}")

    scores = grid
    if priors is not None and constraints.use_priors_at_decode:
        scores = adjusted_emissions(grid, priors, constraints.blank_only_penalty).log_values
    forbidden = np.zeros(lattice.num_states, dtype=bool)
    if constraints.forbid_intra_word_blanks:
        forbidden = lattice.intra_word_blanks()
    return grid, scores, lattice, forbidden, tuple(words or ()), word_lengths


def _build_result(p, grid, lattice, state_path, score, words, word_lengths):
    shift = p.frame_shift_ms if isinstance(p, Posteriorgram) else 10.0
    utt_id = p.utt_id if isinstance(p, Posteriorgram) else "utt"
    state_path = np.asarray(state_path)
    labels = lattice.states[state_path]
    word_of = None
    if word_lengths is not None:
        word_of = np.repeat(np.arange(len(word_lengths)), word_lengths)
    spans, confs = [], []
    for j, token in enumerate(lattice.tokens):
        frames = np.flatnonzero(state_path == 2 * j + 1)
        spans.append(TokenSpan(token, float(frames[0] * shift), float((frames[-1] + 1) * shift),
                               None if word_of is None else int(word_of[j])))
        confs.append(float(np.exp(grid[frames, token].mean())))
    return AlignmentResult(tuple(int(x) for x in labels), tuple(int(x) for x in state_path),
                           float(score), tuple(spans), tuple(confs), utt_id, words)


def viterbi_align(p, w: Sequence[int], priors: Optional[Priors] = None,
                  constraints: Optional[AlignConstraints] = None,
                  lexicon: Optional[Lexicon] = None, words: Optional[Sequence[str]] = None,
                  vocab: Optional[Vocabulary] = None) -> AlignmentResult:
    """Best lattice path for ``w`` and the token spans it implies.

    Equal-score predecessors resolve to the larger state index, and the final
    blank state wins a tie with the last token state.
    """
    grid, scores, lattice, forbidden, words, word_lengths = _prepare(
        p, w, priors, constraints, lexicon, words, vocab)
    T = grid.shape[0]
    S = lattice.num_states
    e = scores[:, lattice.states]
    e = np.where(forbidden, -np.inf, e)
    skip = lattice.skip_allowed
    states_idx = np.arange(S)

    delta = np.full((T, S), -np.inf)
    back = np.zeros((T, S), dtype=np.int64)
    delta[0, :2] = e[0, :2]
    for t in range(1, T):
        prev = delta[t - 1]
        best = prev.copy()
        arg = states_idx.copy()
        c1 = np.full(S, -np.inf)
        c1[1:] = prev[:-1]
        take = _beats(c1, best)
        best[take] = c1[take]
        arg[take] = states_idx[take] - 1
        c2 = np.full(S, -np.inf)
        c2[2:] = prev[:-2]
        take = skip & _beats(c2, best)
        best[take] = c2[take]
        arg[take] = states_idx[take] - 2
        delta[t] = best + e[t]
        back[t] = arg

    last = S - 2 if _beats(delta[T - 1, S - 2], delta[T - 1, S - 1]) else S - 1
    score = delta[T - 1, last]
    if score == -np.inf:
        raise NoFeasiblePath("every path has zero score")
    path = np.empty(T, dtype=np.int64)
    path[-1] = last
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return _build_result(p, grid, lattice, path, score, words, word_lengths)


def brute_force_best_path(p, w: Sequence[int], priors: Optional[Priors] = None,
                          constraints: Optional[AlignConstraints] = None,
                          lexicon: Optional[Lexicon] = None,
                          words: Optional[Sequence[str]] = None,
                          vocab: Optional[Vocabulary] = None,
                          max_paths: int = MAX_ORACLE_PATHS) -> AlignmentResult:
    """Exhaustive counterpart of :func:`viterbi_align`.

    Ties among maximal paths go to the state sequence that is greatest when
    compared from the last frame backwards, which is what backtracking with
    larger-index preference produces.
    """
    grid, scores, lattice, forbidden, words, word_lengths = _prepare(
        p, w, priors, constraints, lexicon, words, vocab)
    T, K = grid.shape
    paths = enumerate_paths(K, T, max_paths)
    paths = paths[feasible_paths(paths, lattice.tokens)]
    states = state_trajectories(paths)
    total = path_scores(scores, paths)
    total = np.where(forbidden[states].any(axis=1), -np.inf, total)
    best = total.max()
    if best == -np.inf:
        raise NoFeasiblePath("every path has zero score")
    tied = np.flatnonzero(~_beats(best, total))
    order = np.lexsort(states[tied].T)
    pick = tied[order[-1]]
    return _build_result(p, grid, lattice, states[pick], total[pick], words, word_lengths)


def spans_to_words(spans: Sequence[TokenSpan], words: Sequence[str],
                   lexicon: Lexicon) -> List[WordSpan]:
    """Merge consecutive token spans into word spans."""
    try:
        ids, lengths = lexicon.expand(words)
    except Exception as err:
        raise UnsegmentableTranscript(str(err)) from err
    if ids != tuple(s.token_id for s in spans):
        raise UnsegmentableTranscript("lexicon expansion does not match the token spans")
    out, pos = [], 0
    for word, n in zip(words, lengths):
        out.append(WordSpan(word, spans[pos].onset_ms, spans[pos + n - 1].offset_ms))
        pos += n
    return out
