"""
Decode-time options
===================

The same emissions aligned with priors at decode switched off, with the
penalty on blank only, and with blanks banned inside words.
"""

import numpy as np

from ctcprior import AlignConstraints, Lexicon, Priors, viterbi_align

rows = np.log([[0.5, 0.3, 0.2], [0.4, 0.5, 0.1], [0.5, 0.1, 0.4], [0.6, 0.1, 0.3]])
priors = Priors.from_probs([0.5, 0.45, 0.05], alpha=1.0)

for name, c in [("default", AlignConstraints()),
                ("no decode priors", AlignConstraints(use_priors_at_decode=False)),
                ("blank only", AlignConstraints(blank_only_penalty=True))]:
    print(f"{name:<18}", viterbi_align(rows, (1, 2), priors, c).best_path)

# "ab" is one word, "c" another; the middle frames lean towards blank
lex = Lexicon({"ab": (1, 2), "c": (3,)})
rows = np.log([[0.1, 0.7, 0.1, 0.1], [0.9, 0.04, 0.03, 0.03], [0.9, 0.04, 0.03, 0.03],
               [0.1, 0.1, 0.7, 0.1], [0.8, 0.1, 0.05, 0.05], [0.1, 0.1, 0.1, 0.7]])
free = viterbi_align(rows, (1, 2, 3), lexicon=lex)
tight = viterbi_align(rows, (1, 2, 3), lexicon=lex,
                      constraints=AlignConstraints(forbid_intra_word_blanks=True))
print("free            ", free.best_path)
print("no intra-word   ", tight.best_path, tight.words)
