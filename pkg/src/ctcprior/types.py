"""Domain types: vocabulary, posteriorgrams, priors and time spans.

Blank is always index 0 of the extended vocabulary. All probability
quantities are stored as float64 log values; ``-inf`` encodes an exact zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .errors import EmptySequence, InvalidToken, ShapeMismatch

BLANK = 0
DEFAULT_PRIOR_FLOOR = 1e-8


@dataclass(frozen=True)
class Vocabulary:
    """Extended vocabulary; ``tokens[0]`` is the blank symbol."""

    tokens: Tuple[str, ...]
    blank_index: int = BLANK

    def __post_init__(self):
        tokens = tuple(self.tokens)
        object.__setattr__(self, "tokens", tokens)
        if self.blank_index != BLANK:
            raise ValueError("blank must occupy index 0")
        if len(tokens) < 2:
            raise ValueError("vocabulary needs blank plus at least one token")
        if any(not t for t in tokens):
            raise ValueError("token strings must be non-empty")
        if len(set(tokens)) != len(tokens):
            raise ValueError("token strings must be unique")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(tokens)})

    @classmethod
    def from_tokens(cls, tokens: Sequence[str], blank: str = "<b>") -> "Vocabulary":
        """Build a vocabulary from the non-blank tokens, prepending ``blank``."""
        return cls((blank,) + tuple(tokens))

    @classmethod
    def numbered(cls, size: int) -> "Vocabulary":
        """Vocabulary ``<b>, 1, 2, ..., size-1`` for a ``size``-column grid."""
        return cls(("<b>",) + tuple(str(i) for i in range(1, size)))

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise InvalidToken(f"unknown token {token!r}") from None

    def encode(self, tokens: Sequence[str]) -> Tuple[int, ...]:
        return check_tokens([self.index(t) for t in tokens], self)

    def decode(self, ids: Sequence[int]) -> List[str]:
        return [self.tokens[i] for i in ids]


def check_tokens(ids: Sequence[int], vocab: Optional[Vocabulary] = None,
                 size: Optional[int] = None, allow_empty: bool = False) -> Tuple[int, ...]:
    """Validate a transcript of token ids and return it as a tuple.

    Raises ``InvalidToken`` on blank or out-of-range ids and ``EmptySequence``
    on an empty transcript unless ``allow_empty``.
    """
    ids = tuple(int(i) for i in ids)
    if not ids and not allow_empty:
        raise EmptySequence("token sequence is empty")
    k = vocab.size if vocab is not None else size
    for pos, i in enumerate(ids):
        if i == BLANK:
            raise InvalidToken(f"blank index at position {pos}")
        if i < 0 or (k is not None and i >= k):
            raise InvalidToken(f"token id {i} at position {pos} out of range")
    return ids


def _as_grid(values) -> np.ndarray:
    grid = np.array(values, dtype=np.float64)
    if grid.ndim != 2:
        raise ShapeMismatch(f"expected a T x K grid, got shape {grid.shape}")
    grid.setflags(write=False)
    return grid


@dataclass(frozen=True)
class Posteriorgram:
    """T x K grid of per-frame log scores.

    ``normalized`` flags true log-posteriors (rows logsumexp to zero). Prior
    adjusted scores are carried in the same type with ``normalized=False``.
    """

    log_values: np.ndarray
    frame_shift_ms: float = 10.0
    utt_id: str = "utt"
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "log_values", _as_grid(self.log_values))
        if not self.frame_shift_ms > 0:
            raise ValueError("frame_shift_ms must be positive")

    @property
    def num_frames(self) -> int:
        return self.log_values.shape[0]

    @property
    def num_classes(self) -> int:
        return self.log_values.shape[1]

    @classmethod
    def from_probs(cls, probs, **kwargs) -> "Posteriorgram":
        with np.errstate(divide="ignore"):
            logs = np.log(np.asarray(probs, dtype=np.float64))
        kwargs.setdefault("normalized", True)
        return cls(logs, **kwargs)


@dataclass(frozen=True)
class Logits:
    """T x K grid of unnormalized network outputs."""

    values: np.ndarray
    frame_shift_ms: float = 10.0
    utt_id: str = "utt"

    def __post_init__(self):
        object.__setattr__(self, "values", _as_grid(self.values))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("logits must be finite")


def emission_grid(x) -> np.ndarray:
    """Return the float64 log grid behind a Posteriorgram or array-like."""
    if isinstance(x, Posteriorgram):
        return x.log_values
    if isinstance(x, Logits):
        return x.values
    return _as_grid(x)


@dataclass(frozen=True)
class Priors:
    """Unigram label priors (log domain) and their scaling exponent."""

    log_p: np.ndarray
    alpha: float = 0.0

    def __post_init__(self):
        log_p = np.array(self.log_p, dtype=np.float64)
        if log_p.ndim != 1 or log_p.size < 2:
            raise ShapeMismatch("priors must be a vector of length K >= 2")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if abs(np.exp(log_p).sum() - 1.0) > 1e-9:
            raise ValueError("priors must sum to one")
        log_p.setflags(write=False)
        object.__setattr__(self, "log_p", log_p)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def size(self) -> int:
        return self.log_p.size

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_p)

    @classmethod
    def uniform(cls, size: int, alpha: float = 0.0) -> "Priors":
        return cls(np.full(size, -np.log(size)), alpha)

    @classmethod
    def from_probs(cls, probs, alpha: float = 0.0,
                   floor: float = DEFAULT_PRIOR_FLOOR) -> "Priors":
        """Floor, renormalize and store ``probs`` as priors."""
        p = np.maximum(np.asarray(probs, dtype=np.float64), floor)
        p = p / p.sum()
        return cls(np.log(p), alpha)

    def with_alpha(self, alpha: float) -> "Priors":
        return Priors(self.log_p, alpha)


@dataclass(frozen=True)
class TokenSpan:
    """Time interval ``[onset_ms, offset_ms)`` occupied by one token."""

    token_id: int
    onset_ms: float
    offset_ms: float
    word_index: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.onset_ms < self.offset_ms:
            raise ValueError(f"invalid span [{self.onset_ms}, {self.offset_ms})")

    @property
    def duration_ms(self) -> float:
        return self.offset_ms - self.onset_ms


@dataclass(frozen=True)
class WordSpan:
    word: str
    onset_ms: float
    offset_ms: float

    @property
    def duration_ms(self) -> float:
        return self.offset_ms - self.onset_ms


@dataclass(frozen=True)
class Lexicon:
    """Mapping from word to its (non-empty) token-id sequence."""

    entries: Mapping[str, Tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        entries = {}
        for word, ids in dict(self.entries).items():
            if not word:
                raise ValueError("empty word in lexicon")
            entries[word] = check_tokens(ids)
        object.__setattr__(self, "entries", entries)

    def __getitem__(self, word: str) -> Tuple[int, ...]:
        try:
            return self.entries[word]
        except KeyError:
            raise InvalidToken(f"word {word!r} not in lexicon") from None

    def __contains__(self, word):
        return word in self.entries

    def expand(self, words: Sequence[str]) -> Tuple[Tuple[int, ...], List[int]]:
        """Return the concatenated token ids and each word's token count."""
        ids: List[int] = []
        lengths = []
        for w in words:
            seq = self[w]
            ids.extend(seq)
            lengths.append(len(seq))
        return tuple(ids), lengths


@dataclass
class ValidationResult:
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_posteriorgram(p, expect_normalized: bool = False,
                           tol: float = 1e-6) -> ValidationResult:
    """Collect NaN/+inf entries and, if requested, rows that are not normalized."""
    grid = emission_grid(p)
    result = ValidationResult()
    bad = np.argwhere(np.isnan(grid) | (grid == np.inf))
    for t, k in bad:
        result.violations.append(f"non-finite entry {grid[t, k]} at ({t}, {k})")
    if expect_normalized and not bad.size:
        with np.errstate(invalid="ignore"):
            row_mass = logsumexp(grid, axis=1)
        for t in np.flatnonzero(~(np.abs(row_mass) <= tol)):
            result.violations.append(
                f"row {t} not normalized: logsumexp = {row_mass[t]:.3g}")
    return result

