"""Data model, importers, BIO codecs, and the canonical JSONL pivot."""

import numpy as np
import pytest

from sdtag.corpus import (
    CLAIM_LABELS,
    CODA_LABELS,
    Clause,
    Corpus,
    LabelSet,
    Paragraph,
    ParseError,
    RCT_LABELS,
    SCIDT_LABELS,
    decode_bio,
    encode_bio,
    infer_label_set,
    parse_coda,
    parse_rct,
    parse_scidt,
    read_jsonl,
    write_coda,
    write_jsonl,
    write_rct,
    write_scidt,
)
from sdtag.fragments import FragmentAnnotation, SubfigureCode


class TestLabelSet:
    def test_bio_expansion_size(self):
        assert SCIDT_LABELS.bio_size == 2 * 7 + 1 == 15
        assert RCT_LABELS.bio_size == 11
        assert CODA_LABELS.bio_size == 9
        assert CLAIM_LABELS.bio_size == 3
        for ls in (SCIDT_LABELS, RCT_LABELS, CODA_LABELS, CLAIM_LABELS):
            assert len(ls.bio_tags()) == ls.bio_size

    def test_none_must_be_member(self):
        with pytest.raises(ValueError):
            LabelSet("x", ("a", "b"), "c")

    def test_unique_labels(self):
        with pytest.raises(ValueError):
            LabelSet("x", ("a", "a"), "a")

    def test_claim_bio_tags(self):
        assert CLAIM_LABELS.bio_tags() == ("O", "B_claim", "I_claim")


class TestBioCodecs:
    def test_encode_example(self):
        ls = SCIDT_LABELS
        assert encode_bio(["fact", "fact", "result", "none"], ls) == [
            "B_fact",
            "I_fact",
            "B_result",
            "O",
        ]

    def test_encode_empty(self):
        assert encode_bio([], SCIDT_LABELS) == []

    def test_encode_after_none(self):
        assert encode_bio(["none", "result", "result"], SCIDT_LABELS) == ["O", "B_result", "I_result"]

    def test_encode_unknown_label(self):
        with pytest.raises(ValueError):
            encode_bio(["nope"], SCIDT_LABELS)

    def test_decode_examples(self):
        assert decode_bio(["B_fact", "I_fact", "O"], SCIDT_LABELS) == ["fact", "fact", "none"]
        assert decode_bio(["I_result"], SCIDT_LABELS) == ["result"]

    def test_decode_unknown_tag(self):
        with pytest.raises(ValueError):
            decode_bio(["B_nope"], SCIDT_LABELS)

    def test_roundtrip_random(self):
        rng = np.random.default_rng(0)
        labels = SCIDT_LABELS.labels
        for _ in range(500):
            seq = [labels[i] for i in rng.integers(0, len(labels), size=rng.integers(0, 12))]
            assert decode_bio(encode_bio(seq, SCIDT_LABELS), SCIDT_LABELS) == seq

    def test_no_inconsistent_i_after_encode(self):
        rng = np.random.default_rng(1)
        labels = CODA_LABELS.labels
        for _ in range(500):
            seq = [labels[i] for i in rng.integers(0, len(labels), size=rng.integers(1, 10))]
            bio = encode_bio(seq, CODA_LABELS)
            for prev, cur in zip(["O"] + bio, bio):
                if cur.startswith("I_"):
                    assert prev[2:] == cur[2:] and prev[0] in "BI"


class TestDomainTypes:
    def test_paragraph_needs_clauses(self):
        with pytest.raises(ValueError):
            Paragraph("p", ())

    def test_corpus_rejects_foreign_labels(self):
        p = Paragraph("p", (Clause(("x",), gold_label="claim"),))
        with pytest.raises(ValueError):
            Corpus(SCIDT_LABELS, (p,))

    def test_fragment_alignment_checked(self):
        frag = FragmentAnnotation.from_sets([set()], [set()])
        with pytest.raises(ValueError):
            Paragraph("p", (Clause(("a",)), Clause(("b",))), frag)


RCT_SAMPLE = """###123
BACKGROUND\tFoo bar .
METHODS\tWe did things .

###124
RESULTS\tIt worked .
"""


class TestRctParser:
    def test_basic_record(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text("###123\nBACKGROUND\tfoo .\n", encoding="utf-8")
        corpus = parse_rct(path)
        assert len(corpus.paragraphs) == 1
        p = corpus.paragraphs[0]
        assert p.id == "123"
        assert len(p.clauses) == 1
        assert p.clauses[0].gold_label == "background"
        assert p.clauses[0].tokens == ("foo", ".")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text("", encoding="utf-8")
        assert len(parse_rct(path).paragraphs) == 0

    def test_label_set_has_synthetic_none(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text(RCT_SAMPLE, encoding="utf-8")
        corpus = parse_rct(path)
        assert corpus.label_set.none_label == "O_NONE"
        assert all(c.gold_label != "O_NONE" for p in corpus.paragraphs for c in p.clauses)

    def test_missing_tab_reports_line(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text("###1\nBACKGROUND foo\n", encoding="utf-8")
        with pytest.raises(ParseError) as exc:
            parse_rct(path)
        assert exc.value.line == 2

    def test_unknown_label_named(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text("###1\nBANANA\tfoo\n", encoding="utf-8")
        with pytest.raises(ParseError, match="BANANA"):
            parse_rct(path)

    def test_reserialize_roundtrip(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text(RCT_SAMPLE, encoding="utf-8")
        corpus = parse_rct(path)
        out = tmp_path / "b.txt"
        write_rct(corpus, out)
        assert parse_rct(out) == corpus


class TestScidtParser:
    def _write(self, tmp_path, rows):
        path = tmp_path / "a.tsv"
        path.write_text("".join("\t".join(map(str, r)) + "\n" for r in rows), encoding="utf-8")
        return path

    def test_grouping(self, tmp_path):
        path = self._write(
            tmp_path,
            [("p1", 0, "foo bar", "goal"), ("p1", 1, "baz", "method"), ("p2", 0, "x", "none")],
        )
        corpus = parse_scidt(path)
        assert [p.id for p in corpus.paragraphs] == ["p1", "p2"]
        assert len(corpus.paragraphs[0].clauses) == 2
        assert corpus.label_set is SCIDT_LABELS

    def test_implication_accepted(self, tmp_path):
        path = self._write(tmp_path, [("p1", 0, "so it follows", "implication")])
        assert parse_scidt(path).paragraphs[0].clauses[0].gold_label == "implication"

    def test_noncontiguous_index_rejected(self, tmp_path):
        path = self._write(tmp_path, [("p1", 0, "a", "goal"), ("p1", 2, "b", "goal")])
        with pytest.raises(ParseError, match="contiguity"):
            parse_scidt(path)

    def test_unknown_label(self, tmp_path):
        path = self._write(tmp_path, [("p1", 0, "a", "banana")])
        with pytest.raises(ParseError, match="banana"):
            parse_scidt(path)

    def test_reserialize_roundtrip(self, tmp_path):
        path = self._write(
            tmp_path,
            [("p1", 0, "foo bar", "goal"), ("p1", 1, "baz qux", "result"), ("p2", 0, "x y", "none")],
        )
        corpus = parse_scidt(path)
        out = tmp_path / "b.tsv"
        write_scidt(corpus, out)
        assert parse_scidt(out) == corpus


class TestCodaParser:
    def test_basic(self, tmp_path):
        path = tmp_path / "a.jsonl"
        path.write_text(
            '{"id": "c1", "segments": [{"text": "In this work", "label": "purpose"},'
            ' {"text": "we measured", "label": "method"}]}\n',
            encoding="utf-8",
        )
        corpus = parse_coda(path)
        assert len(corpus.paragraphs) == 1
        assert len(corpus.paragraphs[0].clauses) == 2
        assert corpus.paragraphs[0].clauses[0].gold_label == "purpose"
        assert corpus.label_set.none_label == "other"

    def test_unknown_label(self, tmp_path):
        path = tmp_path / "a.jsonl"
        path.write_text('{"id": "c1", "segments": [{"text": "x", "label": "banana"}]}\n')
        with pytest.raises(ParseError, match="banana"):
            parse_coda(path)

    def test_bad_json_line_number(self, tmp_path):
        path = tmp_path / "a.jsonl"
        path.write_text('{"id": "c1", "segments": [{"text": "x", "label": "other"}]}\n{oops\n')
        with pytest.raises(ParseError) as exc:
            parse_coda(path)
        assert exc.value.line == 2

    def test_reserialize_roundtrip(self, tmp_path):
        path = tmp_path / "a.jsonl"
        path.write_text(
            '{"id": "c1", "segments": [{"text": "a b", "label": "background"},'
            ' {"text": "c", "label": "finding/contribution"}]}\n'
        )
        corpus = parse_coda(path)
        out = tmp_path / "b.jsonl"
        write_coda(corpus, out)
        assert parse_coda(out) == corpus


class TestCanonicalJsonl:
    def test_roundtrip_with_fragment(self, tmp_path):
        frag = FragmentAnnotation.from_sets(
            [{SubfigureCode(1, "A")}, set()], [{SubfigureCode(1, "A")}, set()]
        )
        p = Paragraph(
            "p1",
            (
                Clause(("we", "did"), raw_text="We did", gold_label="method"),
                Clause(("ok",), gold_label="result"),
            ),
            frag,
        )
        corpus = Corpus(SCIDT_LABELS, (p,))
        path = tmp_path / "c.jsonl"
        write_jsonl(corpus, path)
        back = read_jsonl(path, label_set=SCIDT_LABELS)
        assert back.paragraphs == corpus.paragraphs

    def test_label_set_inference(self):
        assert infer_label_set({"goal", "none"}) is SCIDT_LABELS
        assert infer_label_set({"background", "objective"}) is RCT_LABELS
        assert infer_label_set({"purpose", "other"}) is CODA_LABELS
        assert infer_label_set({"claim"}) is CLAIM_LABELS
        synth = infer_label_set({"alpha", "beta"})
        assert synth.none_label == "O_NONE"
        assert set(synth.labels) == {"alpha", "beta", "O_NONE"}

    def test_read_rejects_mismatched_label_set(self, tmp_path):
        p = Paragraph("p1", (Clause(("x",), gold_label="claim"),))
        path = tmp_path / "c.jsonl"
        write_jsonl(Corpus(CLAIM_LABELS, (p,)), path)
        with pytest.raises(ValueError):
            read_jsonl(path, label_set=SCIDT_LABELS)
