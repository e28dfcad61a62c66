"""Episodic training of the cross-task block and prediction with it.

One training run: draw the source sample set once, group the remaining
source pairs into mini-batches, and for every mini-batch rebuild all six
prototypes with the current parameters, extend the batch with m target
queries per class drawn from the target example set, take the mean query
loss per sub-batch (l_S and l_T), and step the optimizer on l = l_S + l_T.

Per-query loss is the negative log of the probability the fused
distribution assigns to the gold class; two-way gold labels first collapse
neutral + contradiction mass.  Probabilities are floored at 1e-12 before
the log.

Determinism: all run randomness (init, batch shuffling, target-query
draws, dropout) derives from TrainConfig.seed through fixed streams, and
every reduction has a fixed accumulation order, so identical inputs give
bit-identical logs and parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import (
    Dataset,
    EntailLabel,
    ExampleSet,
    LabelScheme,
    sample_source_set,
)
from .encoder import (
    DeskEncoder,
    Encoder,
    EncoderConfig,
    Mode,
    ParameterSet,
    Vocabulary,
)
from .errors import ConfigError, NumericError
from .nnblock import (
    CLASS_ORDER,
    CombineParams,
    Distribution,
    MatchParams,
    PrototypeBank,
    combine_rows,
    compute_prototypes,
    score_queries,
)
from .optim import make_optimizer

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    k: int
    m: int | None = None  # target queries per class per batch; None -> max(1, k // 2)
    batch_size_s: int = 16
    epochs: int = 10
    learning_rate: float = 1e-3
    seed: int = 42
    optimizer: str = "adam"
    prototype_gradients: bool = True
    match_dropout_rate: float = 0.1
    # encoder warm-up on the source task before the episodic loop
    pretrain_epochs: int = 0
    pretrain_learning_rate: float = 0.05

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be positive")
        if self.m is not None and not 1 <= self.m <= self.k:
            # the strict m < k rule would leave k = 1 with no target queries,
            # so m == k is allowed
            raise ConfigError(f"m must be in [1, k]; got m={self.m}, k={self.k}")
        if self.batch_size_s < 1 or self.epochs < 1:
            raise ConfigError("batch_size_s and epochs must be positive")
        if self.learning_rate < 0 or self.pretrain_learning_rate < 0:
            raise ConfigError("learning rates must be non-negative")
        if self.pretrain_epochs < 0:
            raise ConfigError("pretrain_epochs must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError("optimizer must be 'adam' or 'sgd'")

    @property
    def resolved_m(self) -> int:
        return self.m if self.m is not None else max(1, self.k // 2)


@dataclass(frozen=True)
class QueryBatch:
    source_queries: tuple
    target_queries: tuple


@dataclass(frozen=True)
class LossBreakdown:
    l_s: float
    l_t: float
    l: float


def build_query_batch(remainder_batch: Sequence, target_set: ExampleSet, m: int,
                      rng: np.random.Generator) -> QueryBatch:
    """Source mini-batch unchanged, plus m support examples per target class.

    Draws are without replacement; the chosen positions are kept in
    ascending order so m == k reproduces each class verbatim.
    """
    if m > target_set.k:
        raise ConfigError(f"m={m} exceeds the example set's k={target_set.k}")
    target_queries = []
    for label in target_set.scheme.labels:
        members = target_set.per_class[label]
        picks = sorted(rng.choice(target_set.k, size=m, replace=False))
        target_queries.extend(members[i] for i in picks)
    return QueryBatch(source_queries=tuple(remainder_batch),
                      target_queries=tuple(target_queries))


def _gold_mask(label: EntailLabel, scheme: LabelScheme) -> list[float]:
    """Row of the (n, 3) gold mask: the gold probability is sum(g * mask)."""
    if label not in scheme.labels:
        raise ValueError(f"label {label.value!r} invalid under scheme {scheme.value}")
    if label is EntailLabel.NON_ENTAILMENT:
        return [0.0, 1.0, 1.0]  # two-way collapse: neutral + contradiction mass
    return [1.0 if label is c else 0.0 for c in CLASS_ORDER]


def _nll_rows(queries, labels, schemes, bank, match, comb, encoder, mode, rng) -> Tensor:
    reps = encoder.encode_batch(queries, mode, rng)
    g_s, g_t = score_queries(reps, bank, match, mode, rng)
    g = combine_rows(g_s, g_t, comb)
    mask = np.array([_gold_mask(label, scheme) for label, scheme in zip(labels, schemes)])
    gold = ad.tsum(ad.mul(g, mask), axis=1)
    return ad.mul(ad.log(ad.clip_min(gold, PROB_FLOOR)), -1.0)


def query_loss(encoder: Encoder, pair, bank: PrototypeBank, match: MatchParams,
               comb: CombineParams, mode: Mode = Mode.EVAL,
               rng: np.random.Generator | None = None,
               scheme: LabelScheme | None = None) -> Tensor:
    """Negative log likelihood of one query's gold class (scalar tensor)."""
    if scheme is None:
        scheme = LabelScheme.TWO_WAY if pair.label in LabelScheme.TWO_WAY.labels \
            else LabelScheme.THREE_WAY
    losses = _nll_rows([pair], [pair.label], [scheme], bank, match, comb,
                       encoder, mode, rng)
    return ad.reshape(losses, ())


def batch_loss(encoder: Encoder, batch: QueryBatch, bank: PrototypeBank,
               match: MatchParams, comb: CombineParams,
               source_scheme: LabelScheme, target_scheme: LabelScheme,
               mode: Mode = Mode.EVAL, rng: np.random.Generator | None = None
               ) -> tuple[LossBreakdown, Tensor]:
    """Mean loss per sub-batch and their sum; also returns the loss tensor."""
    n_s, n_t = len(batch.source_queries), len(batch.target_queries)
    if n_s == 0 or n_t == 0:
        raise ValueError("both sub-batches must be non-empty")
    queries = list(batch.source_queries) + list(batch.target_queries)
    labels = [p.label for p in queries]
    schemes = [source_scheme] * n_s + [target_scheme] * n_t
    losses = _nll_rows(queries, labels, schemes, bank, match, comb, encoder, mode, rng)
    l_s = ad.tmean(ad.slice_rows(losses, 0, n_s))
    l_t = ad.tmean(ad.slice_rows(losses, n_s, n_s + n_t))
    total = ad.add(l_s, l_t)
    return LossBreakdown(l_s=l_s.item(), l_t=l_t.item(), l=total.item()), total


class CrossTaskModel:
    """Encoder plus matching and combination weights in one parameter set."""

    def __init__(self, encoder: DeskEncoder, match: MatchParams,
                 comb: CombineParams, params: ParameterSet):
        self.encoder = encoder
        self.match = match
        self.comb = comb
        self.params = params

    @classmethod
    def create(cls, encoder: DeskEncoder, seed: int = 0,
               match_dropout_rate: float = 0.1) -> "CrossTaskModel":
        params = ParameterSet().merge(encoder.params)
        match = MatchParams.create(encoder.d, seed=seed,
                                   dropout_rate=match_dropout_rate, params=params)
        comb = CombineParams.create(params=params)
        return cls(encoder, match, comb, params)

    def prototypes(self, source_set: ExampleSet, target_set: ExampleSet,
                   mode: Mode = Mode.EVAL, rng: np.random.Generator | None = None,
                   prototype_gradients: bool = True) -> PrototypeBank:
        return compute_prototypes(self.encoder, source_set, target_set, mode,
                                  rng, prototype_gradients)


def decide_label(g: np.ndarray, two_way: bool) -> EntailLabel:
    """Argmax decision; exact ties break toward entailment, then neutral."""
    if two_way:
        p_entail, p_non = g[0], g[1] + g[2]
        return EntailLabel.ENTAILMENT if p_entail >= p_non \
            else EntailLabel.NON_ENTAILMENT
    return CLASS_ORDER[int(np.argmax(g))]


def predict(encoder: Encoder, pairs: Sequence, bank: PrototypeBank,
            match: MatchParams, comb: CombineParams
            ) -> list[tuple[EntailLabel, Distribution]]:
    """Eval-mode labels with their fused distributions; two-way banks decide
    entail vs non-entail on the collapsed pair."""
    if not pairs:
        return []
    reps = encoder.encode_batch(pairs, Mode.EVAL)
    g_s, g_t = score_queries(reps, bank, match, Mode.EVAL)
    g = combine_rows(g_s, g_t, comb).data
    return [(decide_label(row, bank.two_way), Distribution(row)) for row in g]


@dataclass
class TrainResult:
    model: CrossTaskModel
    bank: PrototypeBank
    source_sample: ExampleSet
    target_set: ExampleSet
    log: list[dict] = field(default_factory=list)
    pretrain_history: list[float] = field(default_factory=list)


def pretrain_encoder(source: Dataset, encoder: DeskEncoder, epochs: int,
                     learning_rate: float, batch_size: int, seed: int) -> list[float]:
    """Warm up the encoder as a plain source-task classifier (a throwaway
    softmax head), mirroring preparing the base entailment system on the
    source before the episodic phase.  Returns the per-epoch mean loss."""
    from .baselines import BaselineConfig, HeadClassifier

    if epochs == 0:
        return []
    head = HeadClassifier(encoder, source.scheme.labels, seed=seed)
    config = BaselineConfig(learning_rate=learning_rate, batch_size=batch_size,
                            seed=seed)
    return head.fit(list(source.pairs), epochs, config,
                    np.random.default_rng(np.random.SeedSequence([seed, 7])))


def train(source: Dataset, target_set: ExampleSet, config: TrainConfig,
          encoder: DeskEncoder | None = None,
          encoder_config: EncoderConfig | None = None) -> TrainResult:
    """Optional source warm-up, then the full episodic loop; returns the
    trained model, the final eval-mode prototype bank, and one log record
    per batch."""
    if source.scheme is not LabelScheme.THREE_WAY:
        raise ConfigError("source dataset must be three-way")
    if target_set.k != config.k:
        raise ConfigError(f"target example set has k={target_set.k}, config k={config.k}")
    m = config.resolved_m

    if encoder is None:
        encoder_config = encoder_config or EncoderConfig()
        texts = [t for p in source.pairs for t in (p.premise, p.hypothesis)]
        texts += [t for p in target_set.all_pairs() for t in (p.premise, p.hypothesis)]
        encoder = DeskEncoder(encoder_config, Vocabulary.fit(texts, encoder_config.vocab_size),
                              seed=config.seed)
    pretrain_history = pretrain_encoder(source, encoder, config.pretrain_epochs,
                                        config.pretrain_learning_rate,
                                        config.batch_size_s, config.seed)
    model = CrossTaskModel.create(encoder, seed=config.seed,
                                  match_dropout_rate=config.match_dropout_rate)

    source_sample, remainder = sample_source_set(source, config.k, config.seed)
    if len(remainder) == 0:
        raise ConfigError("source has no pairs left after drawing the sample set")
    loop_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    optimizer = make_optimizer(config.optimizer, model.params, config.learning_rate)

    log: list[dict] = []
    for epoch in range(config.epochs):
        order = loop_rng.permutation(len(remainder.pairs))
        # the shuffle decides batch membership; within a batch the original
        # dataset order is kept so the mean's accumulation order is stable
        batches = [np.sort(order[i:i + config.batch_size_s])
                   for i in range(0, len(order), config.batch_size_s)]
        for batch_no, idx in enumerate(batches):
            batch_pairs = [remainder.pairs[i] for i in idx]
            model.params.zero_grads()
            bank = compute_prototypes(encoder, source_sample, target_set, Mode.TRAIN,
                                      loop_rng, config.prototype_gradients)
            query_batch = build_query_batch(batch_pairs, target_set, m, loop_rng)
            breakdown, loss = batch_loss(encoder, query_batch, bank, model.match,
                                         model.comb, source.scheme, target_set.scheme,
                                         Mode.TRAIN, loop_rng)
            if not np.isfinite(breakdown.l):
                raise NumericError(
                    f"non-finite loss at epoch {epoch} batch {batch_no}: "
                    f"l_S={breakdown.l_s}, l_T={breakdown.l_t}")
            loss.backward()
            optimizer.step()
            log.append({"epoch": epoch, "batch": batch_no, "l_S": breakdown.l_s,
                        "l_T": breakdown.l_t, "l": breakdown.l})

    final_bank = compute_prototypes(encoder, source_sample, target_set, Mode.EVAL,
                                    prototype_gradients=False)
    return TrainResult(model=model, bank=final_bank, source_sample=source_sample,
                       target_set=target_set, log=log,
                       pretrain_history=pretrain_history)


# ---------------------------------------------------------------------------
# model checkpointing (parameters + vocabulary + prototype bank)

def save_model(result: TrainResult, path: str | Path, meta: dict | None = None) -> None:
    model = result.model
    payload = {
        "meta": meta or {},
        "encoder_config": {
            "d": model.encoder.config.d,
            "vocab_size": model.encoder.config.vocab_size,
            "embed_dim": model.encoder.config.embed_dim,
            "dropout_rate": model.encoder.config.dropout_rate,
            "freeze_embedding": model.encoder.config.freeze_embedding,
        },
        "vocab": model.encoder.vocab.tokens,
        "match_dropout_rate": model.match.dropout_rate,
        "tensors": model.params.to_manifest(),
        "bank": {
            "two_way": result.bank.two_way,
            "source": [t.data.tolist() for t in result.bank.source],
            "target": [result.bank.target[0].data.tolist(),
                       result.bank.target[1].data.tolist()]
            if result.bank.two_way else
            [t.data.tolist() for t in result.bank.target],
        },
        "target_scheme": result.target_set.scheme.value,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_model(path: str | Path) -> tuple[CrossTaskModel, PrototypeBank, LabelScheme, dict]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    config = EncoderConfig(**payload["encoder_config"])
    encoder = DeskEncoder(config, Vocabulary(payload["vocab"]))
    loaded = ParameterSet.from_manifest(payload["tensors"])
    for name, t in encoder.params.items():
        t.data[...] = loaded[name].data
    params = ParameterSet().merge(encoder.params)
    match = MatchParams(W1=params.add("match.W1", loaded["match.W1"].data),
                        W2=params.add("match.W2", loaded["match.W2"].data),
                        W3=params.add("match.W3", loaded["match.W3"].data),
                        W4=params.add("match.W4", loaded["match.W4"].data),
                        W5=params.add("match.W5", loaded["match.W5"].data),
                        dropout_rate=float(payload.get("match_dropout_rate", 0.0)))
    comb = CombineParams(W6=params.add("combine.W6", loaded["combine.W6"].data),
                         W7=params.add("combine.W7", loaded["combine.W7"].data))
    for name in loaded.names():
        if not loaded.is_trainable(name):
            params.freeze(name)
    bank_data = payload["bank"]
    source = tuple(Tensor(np.asarray(v)) for v in bank_data["source"])
    if bank_data["two_way"]:
        p_non = Tensor(np.asarray(bank_data["target"][1]))
        target = (Tensor(np.asarray(bank_data["target"][0])), p_non, p_non)
    else:
        target = tuple(Tensor(np.asarray(v)) for v in bank_data["target"])
    bank = PrototypeBank(source=source, target=target, two_way=bank_data["two_way"])
    model = CrossTaskModel(encoder, match, comb, params)
    return model, bank, LabelScheme(payload["target_scheme"]), payload.get("meta", {})
