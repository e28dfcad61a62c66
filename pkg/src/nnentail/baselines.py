"""Comparison systems sharing the same encoder abstraction.

* train_on_k: encoder plus a linear softmax head fit to the k-per-class
  target examples only.
* prototypical_baseline: episodic training on the source task with
  softmax over negative squared Euclidean distances to class prototypes;
  at test time the prototypes come from the target example set alone.
* stilts_baseline: sequential transfer; train encoder + 3-way head on the
  source, then fine-tune on the target's k examples (re-dimensioning the
  head when the label schemes differ).  With zero fine-tune epochs the
  source classifier is applied as-is, collapsing to two-way at prediction
  when needed.
* majority_baseline: constant-label predictor; the example set is balanced
  by construction, so the class is a seeded random tie-break.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Dataset, EntailLabel, ExampleSet, LabelScheme
from .encoder import DeskEncoder, Mode, ParameterSet
from .errors import ConfigError
from .optim import make_optimizer

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class BaselineConfig:
    epochs: int = 20
    finetune_epochs: int = 20       # stilts phase 2
    episodes: int = 200             # prototypical episodes on the source
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 42
    optimizer: str = "adam"
    freeze_encoder_in_finetune: bool = False

    def __post_init__(self):
        if self.epochs < 0 or self.finetune_epochs < 0 or self.episodes < 0:
            raise ConfigError("epoch/episode counts must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")


def _nll_from_rows(prob_rows: Tensor, class_indices: Sequence[int]) -> Tensor:
    n, c = prob_rows.data.shape
    mask = np.zeros((n, c))
    mask[np.arange(n), class_indices] = 1.0
    gold = ad.tsum(ad.mul(prob_rows, mask), axis=1)
    return ad.tmean(ad.mul(ad.log(ad.clip_min(gold, PROB_FLOOR)), -1.0))


class HeadClassifier:
    """Encoder representations through a linear layer and softmax."""

    def __init__(self, encoder: DeskEncoder, classes: tuple[EntailLabel, ...],
                 seed: int = 0):
        self.encoder = encoder
        self.classes = classes
        self.params = ParameterSet().merge(encoder.params)
        rng = np.random.default_rng(seed)
        self.head_w = self.params.add(
            "head.weight", rng.uniform(-0.05, 0.05, (encoder.d, len(classes))))
        self.head_b = self.params.add("head.bias", np.zeros(len(classes)))

    def _probability_rows(self, pairs, mode: Mode,
                          rng: np.random.Generator | None = None) -> Tensor:
        reps = self.encoder.encode_batch(pairs, mode, rng)
        logits = ad.add(ad.matmul(reps, self.head_w), self.head_b)
        return ad.softmax_rows(logits)

    def fit(self, pairs, epochs: int, config: BaselineConfig,
            rng: np.random.Generator) -> list[float]:
        """Seeded mini-batch NLL training; returns the per-epoch mean loss."""
        label_index = {label: i for i, label in enumerate(self.classes)}
        optimizer = make_optimizer(config.optimizer, self.params, config.learning_rate)
        history = []
        for _ in range(epochs):
            order = rng.permutation(len(pairs))
            epoch_losses = []
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                batch = [pairs[i] for i in idx]
                self.params.zero_grads()
                rows = self._probability_rows(batch, Mode.TRAIN, rng)
                loss = _nll_from_rows(rows, [label_index[p.label] for p in batch])
                loss.backward()
                optimizer.step()
                epoch_losses.append(loss.item())
            history.append(sum(epoch_losses) / len(epoch_losses))
        return history

    def predict_proba(self, pairs) -> np.ndarray:
        if not pairs:
            return np.zeros((0, len(self.classes)))
        return self._probability_rows(pairs, Mode.EVAL).data

    def predict(self, pairs, scheme: LabelScheme | None = None) -> list[EntailLabel]:
        """Argmax labels; a 3-way head asked for two-way answers collapses
        neutral + contradiction into non-entailment."""
        probs = self.predict_proba(pairs)
        native_scheme_labels = self.classes
        collapse = (scheme is LabelScheme.TWO_WAY and len(self.classes) == 3)
        out = []
        for row in probs:
            if collapse:
                out.append(EntailLabel.ENTAILMENT if row[0] >= row[1] + row[2]
                           else EntailLabel.NON_ENTAILMENT)
            else:
                out.append(native_scheme_labels[int(np.argmax(row))])
        return out


def train_on_k(target_set: ExampleSet, config: BaselineConfig,
               encoder: DeskEncoder) -> HeadClassifier:
    """Fit encoder + head to the k-per-class target examples only."""
    clf = HeadClassifier(encoder, target_set.scheme.labels, seed=config.seed)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    clf.fit(target_set.all_pairs(), config.epochs, config, rng)
    return clf


def stilts_baseline(source: Dataset, target_set: ExampleSet, config: BaselineConfig,
                    encoder: DeskEncoder) -> HeadClassifier:
    """Source-task pretraining then target fine-tuning on the k examples."""
    if source.scheme is not LabelScheme.THREE_WAY:
        raise ConfigError("source dataset must be three-way")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 3]))
    clf = HeadClassifier(encoder, source.scheme.labels, seed=config.seed)
    clf.fit(list(source.pairs), config.epochs, config, rng)
    if config.finetune_epochs == 0:
        return clf
    if config.freeze_encoder_in_finetune:
        encoder.params.freeze("*")
    if target_set.scheme is not source.scheme:
        clf = HeadClassifier(encoder, target_set.scheme.labels, seed=config.seed + 1)
    clf.fit(target_set.all_pairs(), config.finetune_epochs, config, rng)
    return clf


def proto_distribution_rows(queries: Tensor, prototypes: Sequence[Tensor]) -> Tensor:
    """Softmax over negative squared Euclidean distance to each prototype."""
    dists = []
    for p in prototypes:
        diff = ad.sub(queries, p)
        dists.append(ad.mul(ad.tsum(ad.mul(diff, diff), axis=1), -1.0))
    return ad.softmax_rows(ad.stack(dists, axis=1))


class PrototypeClassifier:
    """Within-task nearest-prototype decisions for the target classes."""

    def __init__(self, encoder: DeskEncoder, target_set: ExampleSet):
        self.encoder = encoder
        self.classes = target_set.scheme.labels
        self.prototypes = [
            ad.tmean(encoder.encode_batch(target_set.per_class[label], Mode.EVAL), axis=0)
            for label in self.classes]

    def predict_proba(self, pairs) -> np.ndarray:
        if not pairs:
            return np.zeros((0, len(self.classes)))
        reps = self.encoder.encode_batch(pairs, Mode.EVAL)
        return proto_distribution_rows(reps, self.prototypes).data

    def predict(self, pairs, scheme: LabelScheme | None = None) -> list[EntailLabel]:
        probs = self.predict_proba(pairs)
        return [self.classes[int(np.argmax(row))] for row in probs]


def prototypical_baseline(source: Dataset, target_set: ExampleSet,
                          config: BaselineConfig, encoder: DeskEncoder
                          ) -> PrototypeClassifier:
    """Episodic distance-metric training on the source only; the returned
    classifier compares against target prototypes built from the example
    set."""
    if source.scheme is not LabelScheme.THREE_WAY:
        raise ConfigError("source dataset must be three-way")
    k = target_set.k
    classes = source.scheme.labels
    by_class = {label: [p for p in source.pairs if p.label is label]
                for label in classes}
    for label, members in by_class.items():
        if len(members) < k + 1:
            raise ConfigError(f"source class {label.value!r} too small for episodes")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 4]))
    optimizer = make_optimizer(config.optimizer, encoder.params, config.learning_rate)
    label_index = {label: i for i, label in enumerate(classes)}
    for _ in range(config.episodes):
        support, query_pool = [], []
        for label in classes:
            members = by_class[label]
            picks = rng.choice(len(members), size=min(len(members), k + 4),
                               replace=False)
            support.append([members[i] for i in picks[:k]])
            query_pool.extend(members[i] for i in picks[k:])
        query_idx = rng.choice(len(query_pool), size=min(config.batch_size,
                                                         len(query_pool)),
                               replace=False)
        queries = [query_pool[i] for i in query_idx]
        encoder.params.zero_grads()
        prototypes = [ad.tmean(encoder.encode_batch(s, Mode.TRAIN, rng), axis=0)
                      for s in support]
        reps = encoder.encode_batch(queries, Mode.TRAIN, rng)
        rows = proto_distribution_rows(reps, prototypes)
        loss = _nll_from_rows(rows, [label_index[q.label] for q in queries])
        loss.backward()
        optimizer.step()
    return PrototypeClassifier(encoder, target_set)


class MajorityClassifier:
    """Predicts one constant class, chosen by seeded tie-break."""

    def __init__(self, label: EntailLabel, classes: tuple[EntailLabel, ...]):
        self.label = label
        self.classes = classes

    def predict_proba(self, pairs) -> np.ndarray:
        probs = np.zeros((len(pairs), len(self.classes)))
        probs[:, self.classes.index(self.label)] = 1.0
        return probs

    def predict(self, pairs, scheme: LabelScheme | None = None) -> list[EntailLabel]:
        return [self.label] * len(pairs)


def majority_baseline(target_set: ExampleSet, seed: int = 42) -> MajorityClassifier:
    counts = {label: len(target_set.per_class[label])
              for label in target_set.scheme.labels}
    top = max(counts.values())
    tied = [label for label, c in counts.items() if c == top]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 5]))
    return MajorityClassifier(tied[int(rng.integers(len(tied)))],
                              target_set.scheme.labels)
