"""
Training with and without priors
================================

A small windowed network is trained on synthetic speech-like features
twice, once as plain CTC and once with priors at alpha 0.3. Plain CTC
learns to fire for about one frame; priors stretch the predicted spans.
Takes about half a minute.
"""

from ctcprior.cli import format_peakiness
from ctcprior.toy import SyntheticCorpusConfig, TrainConfig, run_comparison

arms = run_comparison(SyntheticCorpusConfig(), TrainConfig(epochs=20), (0.0, 0.3))
print(format_peakiness({a: arm.report for a, arm in arms.items()}))

# per-epoch blank prior of the prior-trained arm
state = arms[0.3].state
print(" ".join(f"{p.probs[0]:.2f}" for p in state.prior_history))
