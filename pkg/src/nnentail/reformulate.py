"""Task reformulators: multiple-choice QA and pronoun coreference to
entailment pairs, and entailment predictions back to task answers.

QA: the document is the premise; each (question, option) rendered by a
hypothesis template is a hypothesis; the correct option is labeled
entailment, the other three non-entailment.

Coreference: the original text is the premise; replacing the pronoun with a
candidate string yields the hypothesis, labeled by that candidate's gold
coreference flag.  For the possessive surface forms "his"/"His"/"her"/"Her"
the replacement is the candidate plus "'s"; all other pronouns are replaced
by the bare candidate string.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .corpus import EntailLabel, EntailmentPair, TARGET_TASK, TaskId
from .errors import IncompletePredictionsError, MalformedItemError, ParseError

POSSESSIVE_PRONOUNS = ("his", "His", "her", "Her")


@dataclass(frozen=True)
class QAItem:
    document: str
    question: str
    options: tuple[str, str, str, str]
    answer_index: int
    item_id: str

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if len(self.options) != 4:
            raise ValueError("QAItem requires exactly 4 options")
        if any(not o.strip() for o in self.options):
            raise ValueError("QAItem options must be non-empty")
        if not 0 <= self.answer_index <= 3:
            raise ValueError("answer_index must be in [0, 3]")


@dataclass(frozen=True)
class CorefItem:
    text: str
    pronoun: str
    pronoun_offset: int
    candidate_a: str
    a_offset: int
    a_is_coref: bool
    candidate_b: str
    b_offset: int
    b_is_coref: bool
    item_id: str

    def __post_init__(self):
        self._check_span(self.pronoun, self.pronoun_offset, "pronoun")
        self._check_span(self.candidate_a, self.a_offset, "candidate_a")
        self._check_span(self.candidate_b, self.b_offset, "candidate_b")

    def _check_span(self, span: str, offset: int, field_name: str) -> None:
        found = self.text[offset:offset + len(span)]
        if found != span:
            raise MalformedItemError(
                f"item {self.item_id!r}: {field_name} {span!r} not at offset {offset} "
                f"(found {found!r})")


@dataclass(frozen=True)
class HypothesisTemplate:
    """A deterministic renderer from (question, answer) to a hypothesis."""

    render: Callable[[str, str], str]

    def __call__(self, question: str, answer: str) -> str:
        out = self.render(question, answer)
        if not out.strip():
            raise ValueError("template rendered an empty hypothesis")
        return out


def concat_template() -> HypothesisTemplate:
    """Question plus a single space plus the answer."""
    return HypothesisTemplate(render=lambda question, answer: f"{question} {answer}")


def qa_to_entailment(item: QAItem,
                     template: HypothesisTemplate | None = None,
                     task: TaskId = TARGET_TASK) -> list[EntailmentPair]:
    """Four pairs per item: one entailment, three non-entailment."""
    template = template or concat_template()
    pairs = []
    for idx, option in enumerate(item.options):
        label = EntailLabel.ENTAILMENT if idx == item.answer_index \
            else EntailLabel.NON_ENTAILMENT
        pairs.append(EntailmentPair(premise=item.document,
                                    hypothesis=template(item.question, option),
                                    label=label, task=task,
                                    origin_id=f"{item.item_id}#{idx}"))
    return pairs


def replace_pronoun(item: CorefItem, candidate: str) -> str:
    """Splice the candidate over the pronoun span, adding "'s" after a
    possessive pronoun."""
    replacement = candidate + "'s" if item.pronoun in POSSESSIVE_PRONOUNS else candidate
    start, end = item.pronoun_offset, item.pronoun_offset + len(item.pronoun)
    return item.text[:start] + replacement + item.text[end:]


def coref_to_entailment(item: CorefItem, task: TaskId = TARGET_TASK) -> list[EntailmentPair]:
    """Two pairs per item, one per candidate; label follows the gold flag."""
    pairs = []
    for tag, candidate, is_coref in (("A", item.candidate_a, item.a_is_coref),
                                     ("B", item.candidate_b, item.b_is_coref)):
        label = EntailLabel.ENTAILMENT if is_coref else EntailLabel.NON_ENTAILMENT
        pairs.append(EntailmentPair(premise=item.text,
                                    hypothesis=replace_pronoun(item, candidate),
                                    label=label, task=task,
                                    origin_id=f"{item.item_id}#{tag}"))
    return pairs


def qa_answer_from_predictions(item_id: str, scores: Mapping[int, float]) -> int:
    """Argmax over the four option scores; ties break to the lowest index."""
    missing = [i for i in range(4) if i not in scores]
    if missing:
        raise IncompletePredictionsError(
            f"item {item_id!r}: missing scores for options {missing}")
    best = 0
    for idx in range(1, 4):
        if scores[idx] > scores[best]:
            best = idx
    return best


def coref_answer_from_predictions(item_id: str, score_a: float, score_b: float,
                                  threshold: float = 0.5) -> tuple[bool, bool]:
    """Per-candidate thresholding; both candidates may come out negative."""
    return (score_a >= threshold, score_b >= threshold)


# ---------------------------------------------------------------------------
# File formats

GAP_COLUMNS = ("ID", "Text", "Pronoun", "Pronoun-offset", "A", "A-offset",
               "A-coref", "B", "B-offset", "B-coref")


def _parse_flag(raw: str, line: int) -> bool:
    value = raw.strip().upper()
    if value not in ("TRUE", "FALSE"):
        raise ParseError(f"coref flag must be TRUE or FALSE, got {raw!r}", line=line)
    return value == "TRUE"


def load_gap_tsv(path: str | Path) -> list[CorefItem]:
    """Parse a GAP-style TSV (header row; URL column, if any, is ignored)."""
    items: list[CorefItem] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if reader.fieldnames is None:
            return items
        missing = [c for c in GAP_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ParseError(f"TSV header missing columns: {', '.join(missing)}")
        for line_no, row in enumerate(reader, start=2):
            try:
                items.append(CorefItem(
                    text=row["Text"],
                    pronoun=row["Pronoun"],
                    pronoun_offset=int(row["Pronoun-offset"]),
                    candidate_a=row["A"],
                    a_offset=int(row["A-offset"]),
                    a_is_coref=_parse_flag(row["A-coref"], line_no),
                    candidate_b=row["B"],
                    b_offset=int(row["B-offset"]),
                    b_is_coref=_parse_flag(row["B-coref"], line_no),
                    item_id=row["ID"],
                ))
            except (MalformedItemError, ParseError):
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(str(exc), line=line_no) from None
    return items


def load_qa_jsonl(path: str | Path) -> list[QAItem]:
    """Parse multiple-choice items: one JSON object per line with fields
    item_id, document, question, options (4 strings), answer_index."""
    items: list[QAItem] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line=line_no) from None
            if "_meta" in record:
                continue
            try:
                items.append(QAItem(document=record["document"],
                                    question=record["question"],
                                    options=tuple(record["options"]),
                                    answer_index=int(record["answer_index"]),
                                    item_id=str(record["item_id"])))
            except KeyError as exc:
                raise ParseError(f"missing field {exc.args[0]!r}", line=line_no) from None
            except ValueError as exc:
                raise ParseError(str(exc), line=line_no) from None
    return items
