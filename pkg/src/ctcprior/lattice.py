"""Blank-expanded label lattice and the CTC collapse function."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeMismatch
from .types import BLANK, Vocabulary, check_tokens


@dataclass(frozen=True)
class ExpandedSequence:
    """The ``2U+1`` state lattice ``(blank, w1, blank, w2, ..., wU, blank)``.

    From state ``s`` a path may stay in ``s``, advance to ``s+1``, or skip to
    ``s+2`` when ``skip_allowed[s+2]``. ``word_start[s]`` marks the odd states
    whose token begins a word; it is all-True when no word segmentation is
    attached.
    """

    states: np.ndarray
    skip_allowed: np.ndarray
    word_start: np.ndarray

    @property
    def num_states(self) -> int:
        return self.states.size

    @property
    def num_tokens(self) -> int:
        return self.states.size // 2

    @property
    def tokens(self) -> Tuple[int, ...]:
        return tuple(int(x) for x in self.states[1::2])

    @property
    def same_label_skip_blocked(self) -> np.ndarray:
        """Odd states whose skip is blocked because the label repeats."""
        blocked = np.zeros(self.num_states, dtype=bool)
        blocked[3::2] = self.states[3::2] == self.states[1:-3:2]
        return blocked

    def intra_word_blanks(self) -> np.ndarray:
        """Boolean mask of blank states lying strictly inside a word."""
        mask = np.zeros(self.num_states, dtype=bool)
        # blank 2j sits between tokens j-1 and j
        mask[2:-2:2] = ~self.word_start[3::2]
        return mask


def expand_labels(w: Sequence[int], vocab: Optional[Vocabulary] = None,
                  word_lengths: Optional[Sequence[int]] = None) -> ExpandedSequence:
    """Interleave blanks with ``w`` and work out the legal skip transitions.

    ``word_lengths`` optionally gives the token count of each word so that
    word-start flags can be attached for the intra-word blank constraint.
    """
    ids = check_tokens(w, vocab)
    u = len(ids)
    states = np.zeros(2 * u + 1, dtype=np.int64)
    states[1::2] = ids

    skip = np.zeros(2 * u + 1, dtype=bool)
    skip[3::2] = states[3::2] != states[1:-3:2]

    word_start = np.ones(2 * u + 1, dtype=bool)
    word_start[0::2] = False
    if word_lengths is not None:
        if sum(word_lengths) != u or any(n < 1 for n in word_lengths):
            raise ShapeMismatch("word lengths do not partition the transcript")
        starts = np.zeros(u, dtype=bool)
        starts[np.cumsum([0] + list(word_lengths[:-1]))] = True
        word_start[1::2] = starts

    for a in (states, skip, word_start):
        a.setflags(write=False)
    return ExpandedSequence(states, skip, word_start)


def collapse_path(path: Sequence[int], vocab: Optional[Vocabulary] = None) -> Tuple[int, ...]:
    """Merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for label in path:
        label = int(label)
        if vocab is not None and not 0 <= label < vocab.size:
            raise ValueError(f"label {label} out of range")
        if label != prev and label != BLANK:
            out.append(label)
        prev = label
    return tuple(out)


def min_feasible_T(w: Sequence[int]) -> int:
    """Fewest frames admitting a path: one per token plus a blank per repeat."""
    ids = tuple(w)
    return len(ids) + sum(a == b for a, b in zip(ids, ids[1:]))


def check_path(state_path: Sequence[int], lattice: ExpandedSequence) -> bool:
    """True if ``state_path`` is a legal complete walk through ``lattice``."""
    s = list(state_path)
    last = lattice.num_states - 1
    if not s or s[0] not in (0, 1) or s[-1] not in (last, last - 1):
        return False
    for a, b in zip(s, s[1:]):
        step = b - a
        if step not in (0, 1, 2) or (step == 2 and not lattice.skip_allowed[b]):
            return False
    return True
