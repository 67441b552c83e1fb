"""Readers and writers for posteriorgrams, priors, lexicons, CTM and reports.

Posteriorgram text format::

    T K frame_shift_ms utt_id
    v00 v01 ... v0(K-1)
    ...

Binary format: magic ``CTCPG1``, little-endian ``u32 T``, ``u32 K``,
``f64 frame_shift_ms``, ``u32`` byte length plus UTF-8 ``utt_id``, then
``T*K`` little-endian f64 values in row-major order.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .align import AlignmentResult
from .errors import BadMagic, MalformedHeader, TrailingData, TruncatedPayload
from .metrics import MetricsReport
from .types import Lexicon, Posteriorgram, Priors, TokenSpan, Vocabulary, WordSpan

PathLike = Union[str, Path]

MAGIC = b"CTCPG1"
BINARY_SUFFIXES = (".pgb", ".ctcpg")
TEXT_SUFFIXES = (".pgt", ".txt")


# -- posteriorgrams ---------------------------------------------------------

def _format_float(x: float) -> str:
    return repr(float(x))


def write_posteriorgram(p: Posteriorgram, path: PathLike, fmt: Optional[str] = None):
    path = Path(path)
    fmt = fmt or ("binary" if path.suffix in BINARY_SUFFIXES else "text")
    if " " in p.utt_id or not p.utt_id:
        raise ValueError("utt_id must be a non-empty string without spaces")
    grid = p.log_values
    T, K = grid.shape
    if fmt == "binary":
        uid = p.utt_id.encode("utf-8")
        head = MAGIC + struct.pack("<IId", T, K, p.frame_shift_ms) + struct.pack("<I", len(uid)) + uid
        path.write_bytes(head + np.ascontiguousarray(grid, dtype="<f8").tobytes())
    elif fmt == "text":
        lines = [f"{T} {K} {_format_float(p.frame_shift_ms)} {p.utt_id}"]
        lines += [" ".join(_format_float(v) for v in row) for row in grid]
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _parse_binary(data: bytes) -> Posteriorgram:
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, got {data[:len(MAGIC)]!r}")
    pos = len(MAGIC)
    if len(data) < pos + 20:
        raise TruncatedPayload("header is truncated")
    T, K, shift = struct.unpack_from("<IId", data, pos)
    (n,) = struct.unpack_from("<I", data, pos + 16)
    pos += 20
    if len(data) < pos + n:
        raise TruncatedPayload("utterance id is truncated")
    try:
        utt_id = data[pos:pos + n].decode("utf-8")
    except UnicodeDecodeError as err:
        raise MalformedHeader("utterance id is not UTF-8") from err
    pos += n
    need = T * K * 8
    if len(data) < pos + need:
        raise TruncatedPayload(f"expected {need} payload bytes, found {len(data) - pos}")
    if len(data) > pos + need:
        raise TrailingData(f"{len(data) - pos - need} unexpected bytes after payload")
    if not shift > 0:
        raise MalformedHeader("frame shift must be positive")
    grid = np.frombuffer(data, dtype="<f8", count=T * K, offset=pos).reshape(T, K)
    return Posteriorgram(grid.astype(np.float64), shift, utt_id)


def _parse_text(text: str) -> Posteriorgram:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MalformedHeader("empty file")
    head = lines[0].split()
    if len(head) != 4:
        raise MalformedHeader("header must be 'T K frame_shift_ms utt_id'")
    try:
        T, K, shift = int(head[0]), int(head[1]), float(head[2])
    except ValueError as err:
        raise MalformedHeader(str(err)) from err
    if T < 1 or K < 1 or not shift > 0:
        raise MalformedHeader("T, K and frame shift must be positive")
    rows = lines[1:]
    if len(rows) < T:
        raise TruncatedPayload(f"expected {T} rows, found {len(rows)}")
    if len(rows) > T:
        raise TrailingData(f"expected {T} rows, found {len(rows)}")
    grid = np.empty((T, K))
    for t, row in enumerate(rows):
        vals = row.split()
        if len(vals) != K:
            raise MalformedHeader(f"row {t} has {len(vals)} values, expected {K}")
        try:
            grid[t] = [float(v) for v in vals]
        except ValueError as err:
            raise MalformedHeader(f"row {t}: {err}") from err
    return Posteriorgram(grid, shift, head[3])


def read_posteriorgram(path: PathLike, fmt: Optional[str] = None) -> Posteriorgram:
    """Read either format; without ``fmt`` the magic bytes decide."""
    data = Path(path).read_bytes()
    if fmt is None:
        fmt = "binary" if data.startswith(MAGIC) or Path(path).suffix in BINARY_SUFFIXES else "text"
    if fmt == "binary":
        return _parse_binary(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as err:
        raise MalformedHeader("text posteriorgram is not UTF-8") from err
    return _parse_text(text)


def posteriorgram_files(directory: PathLike) -> List[Path]:
    d = Path(directory)
    return sorted(f for f in d.iterdir() if f.suffix in BINARY_SUFFIXES + TEXT_SUFFIXES)


# -- vocabularies, transcripts, lexicons --------------------------------------

def read_vocabulary(path: PathLike) -> Vocabulary:
    """One token per line; the first line is the blank symbol."""
    tokens = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    return Vocabulary(tuple(tokens))


def write_vocabulary(vocab: Vocabulary, path: PathLike):
    Path(path).write_text("\n".join(vocab.tokens) + "\n")


def read_lexicon(path: PathLike, vocab: Vocabulary) -> Lexicon:
    """``word tok1 tok2 ...`` per line."""
    entries: Dict[str, Tuple[int, ...]] = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) < 2:
            raise MalformedHeader(f"line {n}: word without tokens")
        if fields[0] in entries:
            raise MalformedHeader(f"line {n}: duplicate word {fields[0]!r}")
        entries[fields[0]] = vocab.encode(fields[1:])
    return Lexicon(entries)


def read_transcripts(path: PathLike) -> Dict[str, List[str]]:
    """``utt_id tok1 tok2 ...`` per line."""
    out = {}
    for line in Path(path).read_text().splitlines():
        fields = line.split()
        if fields:
            out[fields[0]] = fields[1:]
    return out


# -- priors -------------------------------------------------------------------

def write_priors(priors: Priors, vocab: Vocabulary, path: PathLike):
    if priors.size != vocab.size:
        raise ValueError("priors and vocabulary sizes differ")
    lines = [f"#alpha {priors.alpha!r}"]
    lines += [f"{tok} {p:.17g}" for tok, p in zip(vocab.tokens, priors.probs)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_priors(path: PathLike, vocab: Optional[Vocabulary] = None) -> Tuple[Priors, Vocabulary]:
    """Return the priors (ordered by ``vocab`` if given) and the file's vocabulary."""
    alpha = 0.0
    tokens, probs = [], []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        fields = line.split()
        if not fields:
            continue
        if fields[0] == "#alpha":
            if len(fields) != 2:
                raise MalformedHeader(f"line {n}: bad alpha header")
            alpha = float(fields[1])
            continue
        if len(fields) != 2:
            raise MalformedHeader(f"line {n}: expected 'token probability'")
        tokens.append(fields[0])
        probs.append(float(fields[1]))
    file_vocab = Vocabulary(tuple(tokens))
    probs = np.array(probs)
    if vocab is not None:
        probs = probs[[file_vocab.index(t) for t in vocab.tokens]]
    log_p = np.log(probs)
    log_p -= np.logaddexp.reduce(log_p)
    return Priors(log_p, alpha), file_vocab


# -- CTM ----------------------------------------------------------------------

@dataclass(frozen=True)
class CtmRecord:
    utt_id: str
    start_s: float
    dur_s: float
    token: str
    confidence: float = 1.0
    channel: str = "1"

    def format(self) -> str:
        return (f"{self.utt_id} {self.channel} {self.start_s:.3f} {self.dur_s:.3f} "
                f"{self.token} {self.confidence:.3f}")


def ctm_records(results: Iterable[AlignmentResult], vocab: Vocabulary) -> List[CtmRecord]:
    recs = []
    for res in results:
        confs = res.confidences or (1.0,) * len(res.spans)
        for span, conf in zip(res.spans, confs):
            recs.append(CtmRecord(res.utt_id, span.onset_ms / 1000.0,
                                  span.duration_ms / 1000.0, vocab.tokens[span.token_id], conf))
    recs.sort(key=lambda r: (r.utt_id, r.start_s))
    return recs


def word_ctm_records(utt_id: str, spans: Sequence[WordSpan]) -> List[CtmRecord]:
    return [CtmRecord(utt_id, s.onset_ms / 1000.0, s.duration_ms / 1000.0, s.word) for s in spans]


def write_ctm(results: Iterable[AlignmentResult], vocab: Vocabulary, out: Union[PathLike, TextIO]):
    """One line per token span, sorted by utterance then start time."""
    write_ctm_records(ctm_records(results, vocab), out)


def write_ctm_records(records: Iterable[CtmRecord], out: Union[PathLike, TextIO]):
    records = sorted(records, key=lambda r: (r.utt_id, r.start_s))
    text = "".join(r.format() + "\n" for r in records)
    if hasattr(out, "write"):
        out.write(text)
    else:
        Path(out).write_text(text)


def read_ctm(path: PathLike) -> List[CtmRecord]:
    recs = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        f = line.split()
        if not f or f[0].startswith(";;"):
            continue
        if len(f) not in (5, 6):
            raise MalformedHeader(f"line {n}: expected 5 or 6 CTM fields")
        conf = float(f[5]) if len(f) == 6 else 1.0
        recs.append(CtmRecord(f[0], float(f[2]), float(f[3]), f[4], conf, f[1]))
    return recs


def ctm_to_spans(records: Iterable[CtmRecord], vocab: Optional[Vocabulary] = None) -> Dict[str, list]:
    """Group CTM records by utterance into millisecond spans.

    With ``vocab`` the spans are :class:`TokenSpan`; otherwise :class:`WordSpan`.
    """
    out: Dict[str, list] = {}
    for r in sorted(records, key=lambda r: (r.utt_id, r.start_s)):
        onset = round(r.start_s * 1000.0, 6)
        offset = round((r.start_s + r.dur_s) * 1000.0, 6)
        if vocab is not None:
            span = TokenSpan(vocab.index(r.token), onset, offset)
        else:
            span = WordSpan(r.token, onset, offset)
        out.setdefault(r.utt_id, []).append(span)
    return out


# -- reports ------------------------------------------------------------------

def _json_safe(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def write_report(report: MetricsReport, path: PathLike):
    """Write the flat text block to ``path`` and a JSON record next to it."""
    path = Path(path)
    path.write_text(report.format())
    record = {k: _json_safe(v) for k, v in report.as_dict().items()}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(record, indent=2) + "\n")


def read_report(path: PathLike) -> MetricsReport:
    values = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            k, v = line.split()
            values[k] = int(v) if k == "n_utterances" else float(v)
    return MetricsReport(**values)


def write_grid(grid: np.ndarray, path: PathLike, frame_shift_ms: float = 10.0, utt_id: str = "grad"):
    """Save any T x K array in the text posteriorgram layout."""
    write_posteriorgram(Posteriorgram(grid, frame_shift_ms, utt_id), path, fmt="text")
