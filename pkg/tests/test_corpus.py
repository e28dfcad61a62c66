import json
import tempfile
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnentail.corpus import (
    Dataset,
    EntailLabel,
    EntailmentPair,
    LabelScheme,
    dump_jsonl,
    load_example_set,
    load_jsonl,
    parse_label,
    sample_kshot,
    sample_source_set,
    save_example_set,
)
from nnentail.errors import InsufficientExamplesError, ParseError, SchemeViolationError

E, N, C, NON = (EntailLabel.ENTAILMENT, EntailLabel.NEUTRAL,
                EntailLabel.CONTRADICTION, EntailLabel.NON_ENTAILMENT)


def make_pairs(n_per_class, scheme=LabelScheme.THREE_WAY):
    pairs = []
    for label in scheme.labels:
        for i in range(n_per_class):
            pairs.append(EntailmentPair(f"premise {label.value} {i}",
                                        f"hypothesis {label.value} {i}", label))
    return pairs


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestLoadJsonl:
    def test_single_neutral_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_lines(p, [json.dumps({"premise": "a", "hypothesis": "b", "label": "neutral"})])
        ds = load_jsonl(p, LabelScheme.THREE_WAY)
        assert len(ds) == 1
        assert ds.pairs[0].label is N

    def test_two_way_rejects_contradiction(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_lines(p, [json.dumps({"premise": "a", "hypothesis": "b",
                                    "label": "contradiction"})])
        with pytest.raises(SchemeViolationError):
            load_jsonl(p, LabelScheme.TWO_WAY)

    def test_three_lines_in_file_order(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_lines(p, [json.dumps({"premise": f"p{i}", "hypothesis": "h",
                                    "label": "entailment"}) for i in range(3)])
        ds = load_jsonl(p, LabelScheme.THREE_WAY)
        assert [q.premise for q in ds.pairs] == ["p0", "p1", "p2"]

    def test_malformed_line_reports_line_number(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_lines(p, [json.dumps({"premise": "a", "hypothesis": "b", "label": "neutral"}),
                        "{not json"])
        with pytest.raises(ParseError, match="line 2"):
            load_jsonl(p, LabelScheme.THREE_WAY)

    def test_missing_field_reports_line_number(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_lines(p, [json.dumps({"premise": "a", "label": "neutral"})])
        with pytest.raises(ParseError, match="hypothesis"):
            load_jsonl(p, LabelScheme.THREE_WAY)

    def test_meta_header_skipped(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_lines(p, [json.dumps({"_meta": {"seed": 1}}),
                        json.dumps({"premise": "a", "hypothesis": "b", "label": "neutral"})])
        assert len(load_jsonl(p, LabelScheme.THREE_WAY)) == 1

    def test_label_aliases_case_insensitive(self):
        assert parse_label("Entailment") is E
        assert parse_label("NON-ENTAILMENT") is NON
        assert parse_label("not_entailment") is NON
        with pytest.raises(ParseError):
            parse_label("maybe")


class TestPairInvariants:
    def test_empty_premise_rejected(self):
        with pytest.raises(ValueError):
            EntailmentPair("   ", "h", E)

    def test_empty_hypothesis_rejected(self):
        with pytest.raises(ValueError):
            EntailmentPair("p", "\t\n", E)

    def test_dataset_scheme_enforced(self):
        with pytest.raises(SchemeViolationError):
            Dataset(LabelScheme.TWO_WAY, (EntailmentPair("p", "h", C),))


class TestSampleKshot:
    def test_k1_deterministic(self):
        ds = Dataset(LabelScheme.THREE_WAY, tuple(make_pairs(5)))
        a = sample_kshot(ds, 1, 42)
        b = sample_kshot(ds, 1, 42)
        assert a.per_class == b.per_class

    def test_insufficient_examples_names_class(self):
        pairs = make_pairs(2)
        ds = Dataset(LabelScheme.THREE_WAY, tuple(pairs))
        with pytest.raises(InsufficientExamplesError, match="entailment"):
            sample_kshot(ds, 3, 42)

    def test_different_seeds_differ(self):
        ds = Dataset(LabelScheme.THREE_WAY, tuple(make_pairs(100)))
        a = sample_kshot(ds, 5, 42)
        b = sample_kshot(ds, 5, 16)
        # exhaustive membership comparison across all classes
        differs = False
        for label in ds.scheme.labels:
            set_a = {(p.premise, p.hypothesis) for p in a.per_class[label]}
            set_b = {(p.premise, p.hypothesis) for p in b.per_class[label]}
            if set_a != set_b:
                differs = True
        assert differs

    def test_each_class_has_exactly_k(self):
        ds = Dataset(LabelScheme.THREE_WAY, tuple(make_pairs(10)))
        es = sample_kshot(ds, 4, 7)
        assert all(len(es.per_class[l]) == 4 for l in ds.scheme.labels)


class TestSampleSourceSet:
    def test_remainder_counts(self):
        ds = Dataset(LabelScheme.THREE_WAY, tuple(make_pairs(10)))
        sample, remainder = sample_source_set(ds, 2, 42)
        counts = remainder.class_counts()
        assert all(c == 8 for c in counts.values())

    def test_partition_property(self):
        ds = Dataset(LabelScheme.THREE_WAY, tuple(make_pairs(10)))
        sample, remainder = sample_source_set(ds, 3, 11)
        sampled = sample.all_pairs()
        assert not (set(sampled) & set(remainder.pairs))
        combined = sorted([(p.premise, p.hypothesis) for p in sampled]
                          + [(p.premise, p.hypothesis) for p in remainder.pairs])
        original = sorted((p.premise, p.hypothesis) for p in ds.pairs)
        assert combined == original

    def test_remainder_keeps_order(self):
        ds = Dataset(LabelScheme.THREE_WAY, tuple(make_pairs(6)))
        _, remainder = sample_source_set(ds, 1, 42)
        positions = [ds.pairs.index(p) for p in remainder.pairs]
        assert positions == sorted(positions)


class TestSerialization:
    def test_example_set_bytes_identical_across_runs(self, tmp_path):
        ds = Dataset(LabelScheme.THREE_WAY, tuple(make_pairs(10)))
        f1, f2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_example_set(sample_kshot(ds, 3, 42), f1)
        save_example_set(sample_kshot(ds, 3, 42), f2)
        assert f1.read_bytes() == f2.read_bytes()

    def test_example_set_roundtrip(self, tmp_path):
        ds = Dataset(LabelScheme.TWO_WAY, tuple(make_pairs(8, LabelScheme.TWO_WAY)))
        es = sample_kshot(ds, 2, 16)
        path = tmp_path / "es.jsonl"
        save_example_set(es, path)
        loaded = load_example_set(path)
        assert loaded.k == 2 and loaded.seed == 16
        assert [(p.premise, p.label) for p in loaded.all_pairs()] == \
               [(p.premise, p.label) for p in es.all_pairs()]

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.text(min_size=1).filter(lambda s: s.strip()),
                              st.text(min_size=1).filter(lambda s: s.strip()),
                              st.sampled_from(["entailment", "neutral", "contradiction"])),
                    min_size=1, max_size=8))
    def test_jsonl_roundtrip(self, rows):
        pairs = [EntailmentPair(p, h, parse_label(l)) for p, h, l in rows]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "d.jsonl"
            dump_jsonl(pairs, path)
            loaded = load_jsonl(path, LabelScheme.THREE_WAY)
        assert [(q.premise, q.hypothesis, q.label) for q in loaded.pairs] == \
               [(p.premise, p.hypothesis, p.label) for p in pairs]
