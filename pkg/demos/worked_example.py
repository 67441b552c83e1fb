"""
Priors on a two-frame posteriorgram
===================================

One token, two frames. Dividing the posteriors by label priors changes
which path wins.
"""

import math

import numpy as np

from ctcprior import (
    Posteriorgram,
    Priors,
    adjusted_emissions,
    brute_force_loss,
    ctc_loss_from_posteriorgram,
    viterbi_align,
)

# columns are (blank, a)
p = Posteriorgram.from_probs([[0.6, 0.4], [0.3, 0.7]], frame_shift_ms=20.0)
priors = Priors.from_probs([0.75, 0.25], alpha=1.0)

# three paths collapse to "a": (blank a), (a blank), (a a)
plain = ctc_loss_from_posteriorgram(p, (1,))
boosted = ctc_loss_from_posteriorgram(p, (1,), priors)
print(f"all-path score without priors {math.exp(plain.log_likelihood):.2f}")
print(f"all-path score with priors    {math.exp(boosted.log_likelihood):.2f}")

# adjusted rows no longer sum to one, the enumeration oracle does not care
adj = adjusted_emissions(p, priors)
print("adjusted rows\n", np.exp(adj.log_values))
print("oracle agrees:", math.isclose(brute_force_loss(adj, (1,)), boosted.log_likelihood))

for label, pr in (("no priors", None), ("priors", priors)):
    res = viterbi_align(p, (1,), pr)
    span = res.spans[0]
    print(f"{label:<10} path {res.best_path}  score {math.exp(res.log_score):.2f}  "
          f"span [{span.onset_ms:g}, {span.offset_ms:g}) ms")
