"""
Two ways to estimate label priors
=================================

Summing posteriors over frames, or counting labels on Viterbi paths.
Accumulators merge, so each shard can be processed separately.
"""

import numpy as np

from ctcprior import (
    PriorAccumulator,
    accumulate_posteriorgram,
    accumulate_viterbi,
    finalize,
    merge,
    viterbi_align,
)

rng = np.random.default_rng(3)
K = 4

# blank-heavy posteriors, the usual shape of a CTC model's output
grams, transcripts = [], []
for _ in range(40):
    T = int(rng.integers(8, 20))
    grams.append(np.log(rng.dirichlet([6.0, 1.0, 1.0, 1.0], size=T)))
    transcripts.append(tuple(int(x) for x in rng.integers(1, K, size=2)))

shards = []
for part in (slice(0, 20), slice(20, 40)):
    marg = vit = PriorAccumulator.empty(K)
    for g, w in zip(grams[part], transcripts[part]):
        marg = accumulate_posteriorgram(marg, g)
        vit = accumulate_viterbi(vit, viterbi_align(g, w).best_path)
    shards.append((marg, vit))

marginal = finalize(merge(shards[0][0], shards[1][0]))
counted = finalize(merge(shards[0][1], shards[1][1]))
np.set_printoptions(precision=3, suppress=True)
print("marginal estimate", marginal.probs)
print("viterbi counts   ", counted.probs)
