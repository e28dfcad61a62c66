import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nnentail.corpus import EntailLabel
from nnentail.errors import IncompletePredictionsError, MalformedItemError, ParseError
from nnentail.reformulate import (
    CorefItem,
    QAItem,
    concat_template,
    coref_answer_from_predictions,
    coref_to_entailment,
    load_gap_tsv,
    load_qa_jsonl,
    qa_answer_from_predictions,
    qa_to_entailment,
    replace_pronoun,
)

E, NON = EntailLabel.ENTAILMENT, EntailLabel.NON_ENTAILMENT

# Curly apostrophe in the original text; the possessive rule appends a
# straight "'s".
MCFERRAN_TEXT = ("McFerran’s horse farm was named Glen View. "
                 "After his death in 1885, John E. Green acquired the farm.")
MCFERRAN_HYP_A = ("McFerran’s horse farm was named Glen View. "
                  "After McFerran's death in 1885, John E. Green acquired the farm.")
MCFERRAN_HYP_B = ("McFerran’s horse farm was named Glen View. "
                  "After John E. Green's death in 1885, John E. Green acquired the farm.")


def mcferran_item() -> CorefItem:
    return CorefItem(
        text=MCFERRAN_TEXT,
        pronoun="his",
        pronoun_offset=MCFERRAN_TEXT.index("his death"),
        candidate_a="McFerran",
        a_offset=0,
        a_is_coref=True,
        candidate_b="John E. Green",
        b_offset=MCFERRAN_TEXT.index("John E. Green"),
        b_is_coref=False,
        item_id="gap-1",
    )


def qa_item(answer_index=1, item_id="q1") -> QAItem:
    return QAItem(document="Tom ran home. Sue stayed.",
                  question="Who ran?",
                  options=("Sue", "Tom", "Nobody", "Both"),
                  answer_index=answer_index, item_id=item_id)


class TestQAConversion:
    def test_label_multiset(self):
        pairs = qa_to_entailment(qa_item())
        labels = sorted(p.label.value for p in pairs)
        assert labels == ["entailment", "non-entailment", "non-entailment",
                          "non-entailment"]

    def test_ten_items_give_forty_pairs(self):
        pairs = []
        for i in range(10):
            pairs.extend(qa_to_entailment(qa_item(item_id=f"q{i}")))
        assert len(pairs) == 40
        assert sum(p.label is E for p in pairs) == 10
        assert sum(p.label is NON for p in pairs) == 30

    def test_default_template_concatenates(self):
        pairs = qa_to_entailment(qa_item())
        assert pairs[1].hypothesis == "Who ran? Tom"

    def test_premise_is_document_and_origin_ids(self):
        pairs = qa_to_entailment(qa_item())
        assert all(p.premise == "Tom ran home. Sue stayed." for p in pairs)
        assert [p.origin_id for p in pairs] == ["q1#0", "q1#1", "q1#2", "q1#3"]

    def test_correct_option_position_respected(self):
        pairs = qa_to_entailment(qa_item(answer_index=3))
        assert pairs[3].label is E
        assert all(pairs[i].label is NON for i in range(3))


class TestCorefConversion:
    def test_mcferran_golden_strings(self):
        pairs = coref_to_entailment(mcferran_item())
        assert len(pairs) == 2
        assert pairs[0].hypothesis == MCFERRAN_HYP_A
        assert pairs[0].label is E
        assert pairs[1].hypothesis == MCFERRAN_HYP_B
        assert pairs[1].label is NON
        assert all(p.premise == MCFERRAN_TEXT for p in pairs)

    @pytest.mark.parametrize("pronoun", ["his", "His", "her", "Her"])
    def test_possessive_forms_take_apostrophe_s(self, pronoun):
        text = f"Alex smiled and {pronoun} dog barked."
        item = CorefItem(text=text, pronoun=pronoun,
                         pronoun_offset=text.index(pronoun + " dog"),
                         candidate_a="Alex", a_offset=0, a_is_coref=True,
                         candidate_b="dog", b_offset=text.index("dog"),
                         b_is_coref=False, item_id="x")
        assert replace_pronoun(item, "Alex") == "Alex smiled and Alex's dog barked."

    def test_non_possessive_direct_replacement(self):
        text = "Mary waved because he left early."
        item = CorefItem(text=text, pronoun="he",
                         pronoun_offset=text.index("he left"),
                         candidate_a="Mary", a_offset=0, a_is_coref=False,
                         candidate_b="he", b_offset=text.index("he left"),
                         b_is_coref=True, item_id="y")
        pairs = coref_to_entailment(item)
        assert pairs[0].hypothesis == "Mary waved because Mary left early."

    def test_degenerate_candidate_reproduces_premise(self):
        text = "Mary waved because he left early."
        item = CorefItem(text=text, pronoun="he",
                         pronoun_offset=text.index("he left"),
                         candidate_a="he", a_offset=text.index("he left"),
                         a_is_coref=True,
                         candidate_b="Mary", b_offset=0, b_is_coref=False,
                         item_id="z")
        assert replace_pronoun(item, "he") == text

    def test_offset_mismatch_rejected(self):
        with pytest.raises(MalformedItemError, match="pronoun"):
            CorefItem(text="abcdef", pronoun="zz", pronoun_offset=1,
                      candidate_a="a", a_offset=0, a_is_coref=True,
                      candidate_b="b", b_offset=1, b_is_coref=False, item_id="bad")

    def test_hypothesis_differs_only_in_span(self):
        item = mcferran_item()
        for pair, candidate in zip(coref_to_entailment(item),
                                   (item.candidate_a, item.candidate_b)):
            start = item.pronoun_offset
            assert pair.hypothesis[:start] == item.text[:start]
            tail = item.text[start + len(item.pronoun):]
            assert pair.hypothesis.endswith(tail)

    def test_conversion_is_pure(self):
        first = coref_to_entailment(mcferran_item())
        second = coref_to_entailment(mcferran_item())
        assert [(p.premise, p.hypothesis, p.label) for p in first] == \
               [(p.premise, p.hypothesis, p.label) for p in second]


class TestBackConversion:
    def test_argmax(self):
        assert qa_answer_from_predictions("q", {0: 0.1, 1: 0.7, 2: 0.2, 3: 0.2}) == 1

    def test_all_equal_ties_to_zero(self):
        assert qa_answer_from_predictions("q", {i: 0.5 for i in range(4)}) == 0

    def test_tie_breaks_to_lowest_index(self):
        assert qa_answer_from_predictions("q", {0: 0.9, 1: 0.9, 2: 0.1, 3: 0.1}) == 0

    def test_missing_option_rejected(self):
        with pytest.raises(IncompletePredictionsError, match="3"):
            qa_answer_from_predictions("q", {0: 0.5, 1: 0.5, 2: 0.5})

    def test_coref_thresholding(self):
        assert coref_answer_from_predictions("c", 0.9, 0.2) == (True, False)
        assert coref_answer_from_predictions("c", 0.3, 0.2) == (False, False)
        assert coref_answer_from_predictions("c", 0.5, 0.5) == (True, True)


class TestFileFormats:
    def test_gap_tsv_roundtrip(self, tmp_path):
        item = mcferran_item()
        path = tmp_path / "gap.tsv"
        header = "ID\tText\tPronoun\tPronoun-offset\tA\tA-offset\tA-coref\tB\tB-offset\tB-coref\tURL"
        row = "\t".join([item.item_id, item.text, item.pronoun,
                         str(item.pronoun_offset), item.candidate_a,
                         str(item.a_offset), "TRUE", item.candidate_b,
                         str(item.b_offset), "FALSE", "http://ignored"])
        path.write_text(header + "\n" + row + "\n", encoding="utf-8")
        items = load_gap_tsv(path)
        assert len(items) == 1
        assert items[0] == item

    def test_gap_tsv_bad_flag(self, tmp_path):
        path = tmp_path / "gap.tsv"
        header = "\t".join(["ID", "Text", "Pronoun", "Pronoun-offset", "A",
                            "A-offset", "A-coref", "B", "B-offset", "B-coref"])
        row = "\t".join(["i", "a b c", "b", "2", "a", "0", "yes", "c", "4", "FALSE"])
        path.write_text(header + "\n" + row + "\n", encoding="utf-8")
        with pytest.raises(ParseError, match="TRUE or FALSE"):
            load_gap_tsv(path)

    def test_gap_tsv_missing_column(self, tmp_path):
        path = tmp_path / "gap.tsv"
        path.write_text("ID\tText\n1\tabc\n", encoding="utf-8")
        with pytest.raises(ParseError, match="Pronoun"):
            load_gap_tsv(path)

    def test_qa_jsonl(self, tmp_path):
        path = tmp_path / "qa.jsonl"
        record = {"item_id": "q1", "document": "Tom ran home.",
                  "question": "Who ran?", "options": ["Sue", "Tom", "Nobody", "Both"],
                  "answer_index": 1}
        path.write_text(json.dumps(record) + "\n", encoding="utf-8")
        items = load_qa_jsonl(path)
        assert items[0].answer_index == 1
        assert items[0].options == ("Sue", "Tom", "Nobody", "Both")

    def test_qa_jsonl_missing_field(self, tmp_path):
        path = tmp_path / "qa.jsonl"
        path.write_text(json.dumps({"item_id": "q1", "document": "d"}) + "\n",
                        encoding="utf-8")
        with pytest.raises(ParseError, match="question"):
            load_qa_jsonl(path)


@given(st.text(alphabet="abcdf ", min_size=1, max_size=15),
       st.text(alphabet="abcdf ", max_size=15),
       st.text(alphabet="xyz", min_size=1, max_size=8))
def test_replacement_surgery_property(prefix, suffix, candidate):
    text = prefix + "he" + suffix
    offset = len(prefix)
    item = CorefItem(text=text, pronoun="he", pronoun_offset=offset,
                     candidate_a=text[:1], a_offset=0, a_is_coref=True,
                     candidate_b=text[:1], b_offset=0, b_is_coref=False,
                     item_id="p")
    hyp = replace_pronoun(item, candidate)
    assert hyp == prefix + candidate + suffix
