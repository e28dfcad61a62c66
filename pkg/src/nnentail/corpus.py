"""Entailment data model, JSONL ingestion, and seeded k-shot sampling.

Canonical interchange format is JSONL, one record per line:
``{"premise": str, "hypothesis": str, "label": str, "origin_id": str?}``.
A line whose object carries a ``"_meta"`` key is a file header and is
skipped by the loader.

Sampling uses numpy's default PCG64 generator seeded explicitly, so the
same (dataset contents, k, seed) always yields the same example set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InsufficientExamplesError, ParseError, SchemeViolationError


class EntailLabel(Enum):
    ENTAILMENT = "entailment"
    NEUTRAL = "neutral"
    CONTRADICTION = "contradiction"
    NON_ENTAILMENT = "non-entailment"


LABEL_ALIASES = {
    "entailment": EntailLabel.ENTAILMENT,
    "neutral": EntailLabel.NEUTRAL,
    "contradiction": EntailLabel.CONTRADICTION,
    "non-entailment": EntailLabel.NON_ENTAILMENT,
    "non_entailment": EntailLabel.NON_ENTAILMENT,
    "not_entailment": EntailLabel.NON_ENTAILMENT,
}


def parse_label(raw: str) -> EntailLabel:
    """Map a label string to its enum value, case-insensitively."""
    try:
        return LABEL_ALIASES[raw.strip().lower()]
    except KeyError:
        raise ParseError(f"unknown label string {raw!r}") from None


class LabelScheme(Enum):
    THREE_WAY = "three_way"
    TWO_WAY = "two_way"

    @property
    def labels(self) -> tuple[EntailLabel, ...]:
        if self is LabelScheme.THREE_WAY:
            return (EntailLabel.ENTAILMENT, EntailLabel.NEUTRAL, EntailLabel.CONTRADICTION)
        return (EntailLabel.ENTAILMENT, EntailLabel.NON_ENTAILMENT)

    @property
    def n_classes(self) -> int:
        return len(self.labels)


class TaskRole(Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class TaskId:
    role: TaskRole
    name: str = ""


SOURCE_TASK = TaskId(TaskRole.SOURCE, "source")
TARGET_TASK = TaskId(TaskRole.TARGET, "target")


@dataclass(frozen=True)
class EntailmentPair:
    """One (premise, hypothesis, label) instance with its task of origin."""

    premise: str
    hypothesis: str
    label: EntailLabel
    task: TaskId = TARGET_TASK
    origin_id: str | None = None

    def __post_init__(self):
        if not self.premise.strip():
            raise ValueError("premise is empty after whitespace trimming")
        if not self.hypothesis.strip():
            raise ValueError("hypothesis is empty after whitespace trimming")


class Split(Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


@dataclass(frozen=True)
class Dataset:
    scheme: LabelScheme
    pairs: tuple[EntailmentPair, ...]
    split: Split = Split.TRAIN

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        allowed = set(self.scheme.labels)
        for p in self.pairs:
            if p.label not in allowed:
                raise SchemeViolationError(
                    f"label {p.label.value!r} not allowed under {self.scheme.value}")

    def __len__(self) -> int:
        return len(self.pairs)

    def class_counts(self) -> dict[EntailLabel, int]:
        counts = {label: 0 for label in self.scheme.labels}
        for p in self.pairs:
            counts[p.label] += 1
        return counts


@dataclass(frozen=True)
class ExampleSet:
    """Exactly k labeled supporting examples per class of one task."""

    k: int
    scheme: LabelScheme
    per_class: Mapping[EntailLabel, tuple[EntailmentPair, ...]]
    seed: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        object.__setattr__(self, "per_class",
                           {label: tuple(ps) for label, ps in self.per_class.items()})
        if set(self.per_class) != set(self.scheme.labels):
            raise ValueError("per_class keys must match the scheme's classes")
        for label, ps in self.per_class.items():
            if len(ps) != self.k:
                raise ValueError(f"class {label.value!r} has {len(ps)} pairs, expected k={self.k}")
            if len({id(p) for p in ps}) != len(ps):
                raise ValueError(f"class {label.value!r} repeats a pair")

    def all_pairs(self) -> list[EntailmentPair]:
        """Pairs in canonical class order (scheme order, then draw order)."""
        out: list[EntailmentPair] = []
        for label in self.scheme.labels:
            out.extend(self.per_class[label])
        return out


# ---------------------------------------------------------------------------
# JSONL I/O

def _pair_to_record(pair: EntailmentPair) -> dict:
    record = {"premise": pair.premise, "hypothesis": pair.hypothesis,
              "label": pair.label.value}
    if pair.origin_id is not None:
        record["origin_id"] = pair.origin_id
    return record


def _record_to_pair(record: dict, scheme: LabelScheme, task: TaskId,
                    line: int) -> EntailmentPair:
    for key in ("premise", "hypothesis", "label"):
        if key not in record:
            raise ParseError(f"missing field {key!r}", line=line)
    label = parse_label(str(record["label"]))
    if label not in scheme.labels:
        raise SchemeViolationError(
            f"line {line}: label {record['label']!r} outside scheme {scheme.value}")
    try:
        return EntailmentPair(premise=str(record["premise"]),
                              hypothesis=str(record["hypothesis"]),
                              label=label, task=task,
                              origin_id=record.get("origin_id"))
    except ValueError as exc:
        raise ParseError(str(exc), line=line) from None


def load_jsonl(path: str | Path, scheme: LabelScheme, task: TaskId = TARGET_TASK,
               split: Split = Split.TRAIN) -> Dataset:
    """Parse a JSONL pair file into a Dataset, preserving file order."""
    pairs: list[EntailmentPair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line=line_no) from None
            if not isinstance(record, dict):
                raise ParseError("record is not a JSON object", line=line_no)
            if "_meta" in record:
                continue
            try:
                pairs.append(_record_to_pair(record, scheme, task, line_no))
            except ParseError:
                raise
    return Dataset(scheme=scheme, pairs=tuple(pairs), split=split)


def dump_jsonl(pairs: Iterable[EntailmentPair], path: str | Path,
               meta: dict | None = None) -> None:
    """Write pairs as JSONL; an optional meta dict becomes the header line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if meta is not None:
            fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for pair in pairs:
            fh.write(json.dumps(_pair_to_record(pair), sort_keys=True, ensure_ascii=False) + "\n")


def read_meta(path: str | Path) -> dict | None:
    """Return the header meta dict of a JSONL file, if present."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            return record.get("_meta") if isinstance(record, dict) else None
    return None


def save_example_set(example_set: ExampleSet, path: str | Path,
                     extra_meta: dict | None = None) -> None:
    meta = {"k": example_set.k, "seed": example_set.seed,
            "scheme": example_set.scheme.value}
    if extra_meta:
        meta.update(extra_meta)
    dump_jsonl(example_set.all_pairs(), path, meta=meta)


def load_example_set(path: str | Path, task: TaskId = TARGET_TASK) -> ExampleSet:
    meta = read_meta(path)
    if meta is None or "k" not in meta or "scheme" not in meta:
        raise ParseError(f"{path}: missing example-set header with k and scheme")
    scheme = LabelScheme(meta["scheme"])
    dataset = load_jsonl(path, scheme, task=task)
    k = int(meta["k"])
    per_class: dict[EntailLabel, list[EntailmentPair]] = {l: [] for l in scheme.labels}
    for pair in dataset.pairs:
        per_class[pair.label].append(pair)
    return ExampleSet(k=k, scheme=scheme,
                      per_class={l: tuple(ps) for l, ps in per_class.items()},
                      seed=int(meta.get("seed", 0)))


# ---------------------------------------------------------------------------
# k-shot sampling

def _choose_positions(dataset: Dataset, k: int, seed: int) -> dict[EntailLabel, list[int]]:
    """Pick k dataset positions per class, without replacement, PCG64-seeded.

    Classes are visited in scheme order against one generator stream, so the
    draw is a pure function of (dataset contents, k, seed).
    """
    if k < 1:
        raise ValueError("k must be positive")
    rng = np.random.default_rng(seed)
    chosen: dict[EntailLabel, list[int]] = {}
    for label in dataset.scheme.labels:
        positions = [i for i, p in enumerate(dataset.pairs) if p.label == label]
        if len(positions) < k:
            raise InsufficientExamplesError(
                f"class {label.value!r} has {len(positions)} instances, need k={k}")
        picks = rng.choice(len(positions), size=k, replace=False)
        chosen[label] = [positions[i] for i in picks]
    return chosen


def sample_kshot(dataset: Dataset, k: int, seed: int) -> ExampleSet:
    """Draw exactly k examples per class, deterministically per seed."""
    chosen = _choose_positions(dataset, k, seed)
    per_class = {label: tuple(dataset.pairs[i] for i in idxs)
                 for label, idxs in chosen.items()}
    return ExampleSet(k=k, scheme=dataset.scheme, per_class=per_class, seed=seed)


def sample_source_set(source: Dataset, k: int, seed: int) -> tuple[ExampleSet, Dataset]:
    """Split the source into a k-per-class sample set and the remainder.

    The remainder keeps the original pair order and, together with the
    sample set, partitions the input exactly.
    """
    chosen = _choose_positions(source, k, seed)
    per_class = {label: tuple(source.pairs[i] for i in idxs)
                 for label, idxs in chosen.items()}
    sampled_positions = {i for idxs in chosen.values() for i in idxs}
    remainder = tuple(p for i, p in enumerate(source.pairs) if i not in sampled_positions)
    example_set = ExampleSet(k=k, scheme=source.scheme, per_class=per_class, seed=seed)
    return example_set, Dataset(scheme=source.scheme, pairs=remainder, split=source.split)
