"""Boundary-error and duration metrics for phone and word alignments.

Spans only need ``onset_ms`` and ``offset_ms`` attributes, so both
:class:`TokenSpan` and :class:`WordSpan` work on either tier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import EmptyCorpus, TierMismatch

TIERS = ("phone", "word")


@dataclass(frozen=True)
class UtteranceAlignment:
    utt_id: str
    phone_spans: Tuple = ()
    word_spans: Tuple = ()

    def tier(self, name: str):
        if name == "phone":
            return self.phone_spans
        if name == "word":
            return self.word_spans
        raise ValueError(f"unknown tier {name!r}")


@dataclass(frozen=True)
class BoundaryError:
    """Utterance-level boundary error with its onset/offset components (ms)."""

    error_ms: float
    onset_ms: float
    offset_ms: float
    count: int


def _edges(spans) -> np.ndarray:
    return np.array([(s.onset_ms, s.offset_ms) for s in spans], dtype=np.float64).reshape(-1, 2)


def boundary_error(ref: UtteranceAlignment, pred: UtteranceAlignment,
                   tier: str = "phone") -> BoundaryError:
    """Mean over tokens of half the summed |onset| and |offset| differences."""
    r, p = _edges(ref.tier(tier)), _edges(pred.tier(tier))
    if r.shape != p.shape:
        raise TierMismatch(
            f"{ref.utt_id}: {len(r)} reference vs {len(p)} predicted {tier} spans")
    if not len(r):
        raise TierMismatch(f"{ref.utt_id}: empty {tier} tier")
    diff = np.abs(r - p)
    onset, offset = diff[:, 0].mean(), diff[:, 1].mean()
    return BoundaryError(float(0.5 * diff.sum(axis=1).mean()), float(onset),
                         float(offset), len(r))


@dataclass
class MetricsReport:
    pbe_ms: float = float("nan")
    wbe_ms: float = float("nan")
    pdur_ms: float = float("nan")
    wdur_ms: float = float("nan")
    phone_onset_ms: float = float("nan")
    phone_offset_ms: float = float("nan")
    word_onset_ms: float = float("nan")
    word_offset_ms: float = float("nan")
    n_utterances: int = 0

    KEYS = ("pbe_ms", "wbe_ms", "pdur_ms", "wdur_ms", "phone_onset_ms",
            "phone_offset_ms", "word_onset_ms", "word_offset_ms", "n_utterances")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.KEYS}

    def format(self) -> str:
        """Flat ``key value`` block, values rounded to 0.1 ms."""
        lines = []
        for k in self.KEYS:
            v = getattr(self, k)
            lines.append(f"{k} {v}" if k == "n_utterances" else f"{k} {v:.1f}")
        return "\n".join(lines) + "\n"


@dataclass
class _TierStats:
    errors: List[BoundaryError] = field(default_factory=list)
    dur_sum: float = 0.0
    dur_count: int = 0


def corpus_metrics(pairs: Iterable[Tuple[UtteranceAlignment, UtteranceAlignment]]) -> MetricsReport:
    """Corpus report: unweighted mean over utterances of boundary errors,
    and durations pooled over every predicted token."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyCorpus("no utterances to evaluate")
    stats = {t: _TierStats() for t in TIERS}
    for ref, pred in pairs:
        for tier in TIERS:
            if not ref.tier(tier) and not pred.tier(tier):
                continue
            st = stats[tier]
            st.errors.append(boundary_error(ref, pred, tier))
            d = _edges(pred.tier(tier))
            st.dur_sum += float((d[:, 1] - d[:, 0]).sum())
            st.dur_count += len(d)

    report = MetricsReport(n_utterances=len(pairs))
    for tier, prefix, key in (("phone", "phone", "pbe_ms"), ("word", "word", "wbe_ms")):
        st = stats[tier]
        if not st.errors:
            continue
        setattr(report, key, float(np.mean([e.error_ms for e in st.errors])))
        setattr(report, f"{prefix}_onset_ms", float(np.mean([e.onset_ms for e in st.errors])))
        setattr(report, f"{prefix}_offset_ms", float(np.mean([e.offset_ms for e in st.errors])))
        dur_key = "pdur_ms" if tier == "phone" else "wdur_ms"
        setattr(report, dur_key, st.dur_sum / st.dur_count)
    return report


def mean_duration(spans: Sequence) -> float:
    d = _edges(spans)
    return float((d[:, 1] - d[:, 0]).mean())
