"""Few-shot textual entailment via cross-task nearest-neighbor matching.

The package trains an entailment classifier for a data-poor target task by
pairing a large source entailment corpus with k labeled target examples per
class: class prototypes are built for both tasks, a learned residual MLP
scores each query against all prototypes, and a learned gate fuses the two
score vectors into one distribution.  Multiple-choice QA and pronoun
coreference items can be reformulated into entailment pairs and back.
"""

__version__ = "0.1.0"
