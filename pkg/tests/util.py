"""Shared builders for trainer/baseline/eval tests."""

import numpy as np

from nnentail.corpus import (
    Dataset,
    EntailLabel,
    EntailmentPair,
    LabelScheme,
    sample_kshot,
)
from nnentail.encoder import DeskEncoder, EncoderConfig, Vocabulary

E, N, C, NON = (EntailLabel.ENTAILMENT, EntailLabel.NEUTRAL,
                EntailLabel.CONTRADICTION, EntailLabel.NON_ENTAILMENT)

WORDS = ("cat", "dog", "bird", "fish", "tree")


def random_dataset(scheme: LabelScheme, n_per_class: int, seed: int = 0,
                   words=WORDS) -> Dataset:
    rng = np.random.default_rng(seed)
    pairs = []
    for label in scheme.labels:
        for _ in range(n_per_class):
            prem = " ".join(rng.choice(words, size=4))
            hyp = " ".join(rng.choice(words, size=3))
            pairs.append(EntailmentPair(prem, hyp, label))
    return Dataset(scheme, tuple(pairs))


def example_set(scheme: LabelScheme, k: int, seed: int = 0, n_per_class: int = 20):
    return sample_kshot(random_dataset(scheme, n_per_class, seed=seed + 100), k, seed)


def small_encoder(d=4, embed_dim=3, dropout=0.0, seed=0, tokens=WORDS) -> DeskEncoder:
    config = EncoderConfig(d=d, vocab_size=len(tokens) + 1, embed_dim=embed_dim,
                           dropout_rate=dropout)
    return DeskEncoder(config, Vocabulary(tokens), seed=seed)


def zero_all(params) -> None:
    for name in params.names():
        params[name].data[...] = 0.0
