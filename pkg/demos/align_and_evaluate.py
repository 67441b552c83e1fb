"""
Aligning a small corpus and scoring the boundaries
==================================================

Fake posteriorgrams are built around known spans, aligned, written as CTM
and scored against the truth.
"""

import io

import numpy as np

from ctcprior import (
    Posteriorgram,
    TokenSpan,
    UtteranceAlignment,
    Vocabulary,
    corpus_metrics,
    viterbi_align,
)
from ctcprior.io import write_ctm

rng = np.random.default_rng(0)
vocab = Vocabulary.from_tokens(["k", "ae", "t", "s"])
K = vocab.size


def fake_utterance(uid, tokens, durations, gap=2, sharpness=2.0):
    """Posteriors peaked on the true label, plus noise."""
    labels, spans, t = [], [], gap
    labels += [0] * gap
    for tok, d in zip(tokens, durations):
        spans.append(TokenSpan(tok, t * 10.0, (t + d) * 10.0))
        labels += [tok] * d + [0] * gap
        t += d + gap
    logits = rng.normal(size=(len(labels), K))
    logits[np.arange(len(labels)), labels] += sharpness
    logp = logits - np.logaddexp.reduce(logits, axis=1, keepdims=True)
    return Posteriorgram(logp, 10.0, uid), spans


pairs, results = [], []
for n in range(5):
    toks = tuple(int(x) for x in rng.permutation(np.arange(1, K))[:3])
    pg, truth = fake_utterance(f"utt{n}", toks, rng.integers(2, 6, size=3))
    res = viterbi_align(pg, toks)
    results.append(res)
    pairs.append((UtteranceAlignment(pg.utt_id, tuple(truth)),
                  UtteranceAlignment(pg.utt_id, res.spans)))

buf = io.StringIO()
write_ctm(results, vocab, buf)
print(buf.getvalue().splitlines()[:6])

# a posteriorgram with clean peaks gives small boundary errors
print(corpus_metrics(pairs).format())
