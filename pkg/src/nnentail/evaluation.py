"""Metrics, multi-seed aggregation, the synthetic benchmark generator, and
the systems-by-k comparison grid.

The synthetic task plants one class-signal token in every hypothesis, so a
trivial rule reading signal tokens is a perfect oracle at zero noise.  The
target task reuses a controllable fraction (``shift``) of the source's
signal tokens per class; the rest are target-only, which is what makes k
labeled target examples genuinely informative.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .baselines import (
    BaselineConfig,
    majority_baseline,
    prototypical_baseline,
    stilts_baseline,
    train_on_k,
)
from .corpus import (
    Dataset,
    EntailLabel,
    EntailmentPair,
    ExampleSet,
    LabelScheme,
    TARGET_TASK,
    SOURCE_TASK,
    sample_kshot,
)
from .encoder import DeskEncoder, EncoderConfig, Vocabulary
from .errors import ConfigError
from .reformulate import CorefItem
from .trainer import TrainConfig, predict, train

MASCULINE_PRONOUNS = frozenset({"he", "him", "his"})
FEMININE_PRONOUNS = frozenset({"she", "her", "hers"})


def accuracy(golds: Sequence, preds: Sequence) -> float:
    if len(golds) != len(preds):
        raise ValueError(f"length mismatch: {len(golds)} golds vs {len(preds)} preds")
    if not golds:
        raise ValueError("cannot score an empty prediction list")
    return sum(g == p for g, p in zip(golds, preds)) / len(golds)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def pronoun_gender(pronoun: str) -> str:
    lowered = pronoun.lower()
    if lowered in MASCULINE_PRONOUNS:
        return "masculine"
    if lowered in FEMININE_PRONOUNS:
        return "feminine"
    raise ValueError(f"cannot classify pronoun {pronoun!r} by gender")


def gap_f1(items: Sequence[tuple[CorefItem, tuple[bool, bool]]]
           ) -> tuple[float, float, float]:
    """Candidate-level F1 by pronoun gender plus the overall (micro) F1.

    Each item contributes two decisions: (gold A flag, predicted A flag)
    and the same for B.
    """
    if not items:
        raise ValueError("cannot score an empty item list")
    counts = {"masculine": [0, 0, 0], "feminine": [0, 0, 0], "overall": [0, 0, 0]}
    for item, (pred_a, pred_b) in items:
        gender = pronoun_gender(item.pronoun)
        for gold, pred in ((item.a_is_coref, pred_a), (item.b_is_coref, pred_b)):
            for bucket in (gender, "overall"):
                if pred and gold:
                    counts[bucket][0] += 1
                elif pred and not gold:
                    counts[bucket][1] += 1
                elif not pred and gold:
                    counts[bucket][2] += 1
    f1_m = _prf(*counts["masculine"])[2]
    f1_f = _prf(*counts["feminine"])[2]
    f1_all = _prf(*counts["overall"])[2]
    return f1_m, f1_f, f1_all


def aggregate_seeds(values: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and sample (n-1) standard deviation."""
    if not values:
        raise ValueError("cannot aggregate an empty value list")
    if len(values) == 1:
        warnings.warn("aggregating a single value; std is 0 by convention")
        return float(values[0]), 0.0
    mean = float(np.mean(values))
    return mean, float(np.std(values, ddof=1))


@dataclass(frozen=True)
class MetricReport:
    """One cell of the comparison grid: a system at one k over all seeds."""

    system_name: str
    metric_name: str
    k: int
    seed_values: tuple[float, ...]
    mean: float
    std: float
    error: str | None = None

    def __post_init__(self):
        if self.seed_values:
            mean, std = aggregate_seeds(self.seed_values)
            if abs(mean - self.mean) > 1e-9 or abs(std - self.std) > 1e-9:
                raise ValueError("stored mean/std disagree with seed values")

    @classmethod
    def from_values(cls, system_name: str, metric_name: str, k: int,
                    values: Sequence[float]) -> "MetricReport":
        mean, std = aggregate_seeds(values)
        return cls(system_name=system_name, metric_name=metric_name, k=k,
                   seed_values=tuple(float(v) for v in values), mean=mean, std=std)

    @classmethod
    def failed(cls, system_name: str, metric_name: str, k: int,
               error: str) -> "MetricReport":
        return cls(system_name=system_name, metric_name=metric_name, k=k,
                   seed_values=(), mean=float("nan"), std=float("nan"), error=error)

    def cell(self) -> str:
        """Percentage cell, mean then sample std, two decimals each."""
        if self.error is not None:
            return "FAILED"
        return f"{100 * self.mean:.2f}±{100 * self.std:.2f}"


# ---------------------------------------------------------------------------
# synthetic task generator

@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Token-level recipe for a desk-scale source/target task pair."""

    filler_tokens: tuple[str, ...]
    source_signals: Mapping[EntailLabel, tuple[str, ...]]
    target_signals: Mapping[EntailLabel, tuple[str, ...]]
    target_scheme: LabelScheme
    shift: float
    noise: float
    n_source_train: int
    n_target_pool: int
    n_target_test: int
    premise_len: int = 5
    hypothesis_len: int = 4
    signals_per_example: int = 1

    def __post_init__(self):
        if not 0.0 <= self.shift <= 1.0:
            raise ConfigError("shift must be in [0, 1]")
        if not 0.0 <= self.noise < 1.0:
            raise ConfigError("noise must be in [0, 1)")
        for signals in (self.source_signals, self.target_signals):
            merged: set[str] = set()
            for tokens in signals.values():
                if merged & set(tokens):
                    raise ConfigError("class signal sets overlap within one task")
                if len(tokens) < self.signals_per_example:
                    raise ConfigError("signals_per_example exceeds a class signal set")
                merged |= set(tokens)
        if min(self.n_source_train, self.n_target_pool, self.n_target_test) < 1:
            raise ConfigError("split sizes must be positive")
        if self.premise_len < 1 or self.hypothesis_len < 1:
            raise ConfigError("sequence lengths must be positive")
        if self.signals_per_example < 1 or self.signals_per_example > self.hypothesis_len:
            raise ConfigError("signals_per_example must fit inside the hypothesis")

    @property
    def all_tokens(self) -> list[str]:
        tokens = list(self.filler_tokens)
        for signals in (self.source_signals, self.target_signals):
            for per_class in signals.values():
                tokens.extend(per_class)
        return sorted(set(tokens))

    @classmethod
    def build(cls, filler_vocab: int = 40, signal_per_class: int = 6,
              shift: float = 0.7, noise: float = 0.05,
              n_source_train: int = 300, n_target_pool: int = 120,
              n_target_test: int = 120,
              target_scheme: LabelScheme = LabelScheme.THREE_WAY,
              premise_len: int = 5, hypothesis_len: int = 4,
              signals_per_example: int = 1) -> "SyntheticTaskSpec":
        """Derive the token sets: each target class keeps round(shift * n)
        of the matching source class's signal tokens and fills the rest
        with fresh target-only tokens."""
        filler = tuple(f"w{i:02d}" for i in range(filler_vocab))
        source = {
            EntailLabel.ENTAILMENT: tuple(f"se{i}" for i in range(signal_per_class)),
            EntailLabel.NEUTRAL: tuple(f"sn{i}" for i in range(signal_per_class)),
            EntailLabel.CONTRADICTION: tuple(f"sc{i}" for i in range(signal_per_class)),
        }
        n_shared = round(shift * signal_per_class)
        if target_scheme is LabelScheme.THREE_WAY:
            target = {
                label: source[label][:n_shared] + tuple(
                    f"t{label.value[0]}{i}" for i in range(signal_per_class - n_shared))
                for label in LabelScheme.THREE_WAY.labels}
        else:
            non_source = [tok for pair in zip(source[EntailLabel.NEUTRAL],
                                              source[EntailLabel.CONTRADICTION])
                          for tok in pair]
            target = {
                EntailLabel.ENTAILMENT:
                    source[EntailLabel.ENTAILMENT][:n_shared] + tuple(
                        f"te{i}" for i in range(signal_per_class - n_shared)),
                EntailLabel.NON_ENTAILMENT:
                    tuple(non_source[:n_shared]) + tuple(
                        f"tx{i}" for i in range(signal_per_class - n_shared)),
            }
        return cls(filler_tokens=filler, source_signals=source, target_signals=target,
                   target_scheme=target_scheme, shift=shift, noise=noise,
                   n_source_train=n_source_train, n_target_pool=n_target_pool,
                   n_target_test=n_target_test, premise_len=premise_len,
                   hypothesis_len=hypothesis_len,
                   signals_per_example=signals_per_example)


def _generate_split(spec: SyntheticTaskSpec, n: int,
                    signals: Mapping[EntailLabel, tuple[str, ...]],
                    scheme: LabelScheme, task, rng: np.random.Generator,
                    label_noise: float) -> Dataset:
    classes = scheme.labels
    golds = [classes[i % len(classes)] for i in range(n)]
    rng.shuffle(golds)
    pairs = []
    n_sig = spec.signals_per_example
    for gold in golds:
        premise = rng.choice(spec.filler_tokens, size=spec.premise_len)
        hyp = list(rng.choice(spec.filler_tokens, size=spec.hypothesis_len - n_sig))
        picks = rng.choice(len(signals[gold]), size=n_sig, replace=False)
        for pick in picks:
            hyp.insert(int(rng.integers(len(hyp) + 1)), signals[gold][int(pick)])
        label = gold
        if label_noise > 0 and rng.random() < label_noise:
            label = classes[int(rng.integers(len(classes)))]
        pairs.append(EntailmentPair(" ".join(premise), " ".join(hyp), label, task))
    return Dataset(scheme, tuple(pairs))


def make_synthetic(spec: SyntheticTaskSpec, seed: int
                   ) -> tuple[Dataset, Dataset, Dataset]:
    """Source train set, target pool, and target test set for one seed.

    Label noise models imperfect training supervision, so it applies to
    the source train set and the target pool; the test split keeps the
    planted gold labels (it measures recovery of the true rule).
    """
    rng = np.random.default_rng(seed)
    source = _generate_split(spec, spec.n_source_train, spec.source_signals,
                             LabelScheme.THREE_WAY, SOURCE_TASK, rng, spec.noise)
    pool = _generate_split(spec, spec.n_target_pool, spec.target_signals,
                           spec.target_scheme, TARGET_TASK, rng, spec.noise)
    test = _generate_split(spec, spec.n_target_test, spec.target_signals,
                           spec.target_scheme, TARGET_TASK, rng, 0.0)
    return source, pool, test


def signal_rule_predict(pairs: Sequence[EntailmentPair],
                        signals: Mapping[EntailLabel, tuple[str, ...]],
                        scheme: LabelScheme) -> list[EntailLabel]:
    """The generator's oracle rule: the first known signal token in the
    hypothesis decides the class; no signal falls back to the first class."""
    token_to_label = {tok: label for label, tokens in signals.items()
                      for tok in tokens}
    out = []
    for pair in pairs:
        label = scheme.labels[0]
        for tok in Vocabulary.tokenize(pair.hypothesis):
            if tok in token_to_label:
                label = token_to_label[tok]
                break
        out.append(label)
    return out


# ---------------------------------------------------------------------------
# comparison grid

SYSTEMS = ("majority", "train-on-k", "protonet", "stilts", "crosstask")


def _run_system(system: str, source: Dataset, target_set: ExampleSet,
                test_pairs: Sequence[EntailmentPair], seed: int,
                encoder_config: EncoderConfig, train_overrides: dict,
                baseline_config: BaselineConfig) -> list[EntailLabel]:
    scheme = target_set.scheme
    if system == "majority":
        return majority_baseline(target_set, seed=seed).predict(test_pairs)
    texts = [t for p in source.pairs for t in (p.premise, p.hypothesis)]
    texts += [t for p in target_set.all_pairs() for t in (p.premise, p.hypothesis)]
    texts += [t for p in test_pairs for t in (p.premise, p.hypothesis)]
    vocab = Vocabulary.fit(texts, encoder_config.vocab_size)
    encoder = DeskEncoder(encoder_config, vocab, seed=seed)
    base = BaselineConfig(**{**baseline_config.__dict__, "seed": seed})
    if system == "train-on-k":
        return train_on_k(target_set, base, encoder).predict(test_pairs, scheme)
    if system == "protonet":
        return prototypical_baseline(source, target_set, base, encoder
                                     ).predict(test_pairs, scheme)
    if system == "stilts":
        return stilts_baseline(source, target_set, base, encoder
                               ).predict(test_pairs, scheme)
    if system == "crosstask":
        config = TrainConfig(**{"k": target_set.k, "seed": seed, **train_overrides})
        result = train(source, target_set, config, encoder=encoder)
        labels = predict(encoder, test_pairs, result.bank, result.model.match,
                         result.model.comb)
        return [label for label, _ in labels]
    raise ConfigError(f"unknown system {system!r} (choose from {SYSTEMS})")


def benchmark_report(source: Dataset, target_pool: Dataset, target_test: Dataset,
                     systems: Sequence[str] = SYSTEMS,
                     ks: Sequence[int] = (1, 3, 5, 10),
                     seeds: Sequence[int] = (42, 16, 32, 64, 128),
                     encoder_config: EncoderConfig | None = None,
                     train_overrides: dict | None = None,
                     baseline_config: BaselineConfig | None = None,
                     on_row: Callable[[MetricReport], None] | None = None
                     ) -> list[MetricReport]:
    """One train+eval per (system, k, seed); every system at a given
    (k, seed) consumes the identical target example set.  Failed cells are
    reported, not raised."""
    encoder_config = encoder_config or EncoderConfig(d=16, embed_dim=16,
                                                     dropout_rate=0.0)
    train_overrides = train_overrides or {}
    baseline_config = baseline_config or BaselineConfig()
    golds = [p.label for p in target_test.pairs]
    reports = []
    for system in systems:
        for k in ks:
            try:
                values = []
                for seed in seeds:
                    target_set = sample_kshot(target_pool, k, seed)
                    preds = _run_system(system, source, target_set,
                                        target_test.pairs, seed, encoder_config,
                                        train_overrides, baseline_config)
                    values.append(accuracy(golds, preds))
                report = MetricReport.from_values(system, "accuracy", k, values)
            except Exception as exc:  # noqa: BLE001 - cell-level isolation
                report = MetricReport.failed(system, "accuracy", k, repr(exc))
            reports.append(report)
            if on_row is not None:
                on_row(report)
    return reports


def report_csv_lines(reports: Iterable[MetricReport],
                     meta: Mapping | None = None) -> list[str]:
    lines = []
    if meta:
        joined = " ".join(f"{key}={meta[key]}" for key in meta)
        lines.append(f"# {joined}")
    lines.append("system,k,metric,mean,std,seed_values")
    for r in reports:
        seed_values = ";".join(repr(v) for v in r.seed_values)
        if r.error is not None:
            lines.append(f"{r.system_name},{r.k},{r.metric_name},,,{r.error!r}")
        else:
            lines.append(f"{r.system_name},{r.k},{r.metric_name},"
                         f"{r.mean!r},{r.std!r},{seed_values}")
    return lines


def render_table(reports: Sequence[MetricReport]) -> str:
    """Systems-by-k text table with mean±std percentage cells."""
    systems = list(dict.fromkeys(r.system_name for r in reports))
    ks = sorted({r.k for r in reports})
    by_cell = {(r.system_name, r.k): r for r in reports}
    width = max(12, max(len(s) for s in systems) + 2)
    out = io.StringIO()
    header = "k-shot".ljust(width) + "".join(f"k={k}".rjust(14) for k in ks)
    out.write(header + "\n")
    out.write("-" * len(header) + "\n")
    for system in systems:
        row = system.ljust(width)
        for k in ks:
            report = by_cell.get((system, k))
            row += (report.cell() if report else "-").rjust(14)
        out.write(row + "\n")
    return out.getvalue()
