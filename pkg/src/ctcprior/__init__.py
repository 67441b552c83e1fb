"""CTC forced alignment with label priors."""

from .align import (
    AlignConstraints,
    AlignmentResult,
    brute_force_best_path,
    segment_transcript,
    spans_to_words,
    viterbi_align,
)
from .errors import *  # noqa: F401,F403
from .lattice import ExpandedSequence, collapse_path, expand_labels, min_feasible_T
from .loss import (
    ForwardBackwardTables,
    LossResult,
    adjusted_emissions,
    ctc_forward_backward,
    ctc_grad,
    ctc_loss_and_grad,
    ctc_loss_from_posteriorgram,
    ctc_loss_with_priors,
)
from .metrics import MetricsReport, UtteranceAlignment, boundary_error, corpus_metrics
from .oracles import brute_force_loss
from .priors import (
    PriorAccumulator,
    accumulate_posteriorgram,
    accumulate_viterbi,
    finalize,
    merge,
    update_schedule,
)
from .types import (
    BLANK,
    Lexicon,
    Logits,
    Posteriorgram,
    Priors,
    TokenSpan,
    Vocabulary,
    WordSpan,
    validate_posteriorgram,
)

__version__ = "0.1.0"
