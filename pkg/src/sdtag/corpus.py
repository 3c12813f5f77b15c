"""Corpus data model, dataset importers, and BIO label codecs.

Three importers (abstract records, clause TSV, segment JSON) all land in
the same immutable Paragraph/Corpus model; the canonical JSONL interchange
(one paragraph object per line) is the pivot every CLI command works from.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .fragments import FragmentAnnotation, SubfigureCode

__all__ = [
    "ParseError",
    "LabelSet",
    "Clause",
    "Paragraph",
    "Corpus",
    "SCIDT_LABELS",
    "RCT_LABELS",
    "CODA_LABELS",
    "CLAIM_LABELS",
    "LABEL_REGISTRY",
    "infer_label_set",
    "encode_bio",
    "decode_bio",
    "parse_rct",
    "parse_scidt",
    "parse_coda",
    "write_rct",
    "write_scidt",
    "write_coda",
    "read_jsonl",
    "write_jsonl",
]


class ParseError(ValueError):
    """Importer failure, carrying file path and 1-based line number."""

    def __init__(self, message: str, path=None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}:"
        if line is not None:
            loc += f"{line}:"
        super().__init__(f"{loc} {message}" if loc else message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class LabelSet:
    """Named tag vocabulary with a designated none/other label."""

    name: str
    labels: tuple[str, ...]
    none_label: str

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be unique")
        if not all(self.labels):
            raise ValueError("labels must be non-empty strings")
        if self.none_label not in self.labels:
            raise ValueError(f"none_label {self.none_label!r} not in labels")

    def bio_tags(self) -> tuple[str, ...]:
        """O first, then B_x/I_x per non-none label in label order."""
        tags = ["O"]
        for lab in self.labels:
            if lab != self.none_label:
                tags.append(f"B_{lab}")
                tags.append(f"I_{lab}")
        return tuple(tags)

    @property
    def bio_size(self) -> int:
        return 2 * (len(self.labels) - 1) + 1


SCIDT_LABELS = LabelSet(
    "scidt",
    ("goal", "fact", "result", "hypothesis", "method", "problem", "implication", "none"),
    "none",
)
# abstract-section gold data has no none class; a synthetic one keeps the
# BIO codecs total
RCT_LABELS = LabelSet(
    "rct",
    ("background", "objective", "methods", "results", "conclusions", "O_NONE"),
    "O_NONE",
)
CODA_LABELS = LabelSet(
    "coda",
    ("background", "purpose", "method", "finding/contribution", "other"),
    "other",
)
CLAIM_LABELS = LabelSet("claim", ("claim", "none"), "none")

LABEL_REGISTRY = {ls.name: ls for ls in (SCIDT_LABELS, RCT_LABELS, CODA_LABELS, CLAIM_LABELS)}


def infer_label_set(labels) -> LabelSet:
    """Pick the registry set covering `labels`, or synthesize one."""
    observed = set(labels)
    for ls in (SCIDT_LABELS, RCT_LABELS, CODA_LABELS, CLAIM_LABELS):
        if observed <= set(ls.labels):
            return ls
    ordered = tuple(sorted(observed))
    for candidate in ("none", "other", "O_NONE"):
        if candidate in observed:
            return LabelSet("inferred", ordered, candidate)
    return LabelSet("inferred", ordered + ("O_NONE",), "O_NONE")


@dataclass(frozen=True)
class Clause:
    tokens: tuple[str, ...]
    raw_text: str = ""
    gold_label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.raw_text.strip() and not self.tokens:
            raise ValueError("clause with text must have tokens")

    @property
    def text(self) -> str:
        return self.raw_text if self.raw_text else " ".join(self.tokens)


@dataclass(frozen=True)
class Paragraph:
    id: str
    clauses: tuple[Clause, ...]
    fragment: FragmentAnnotation | None = None

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))
        if not self.clauses:
            raise ValueError(f"paragraph {self.id!r} has no clauses")
        if self.fragment is not None and len(self.fragment) != len(self.clauses):
            raise ValueError(f"paragraph {self.id!r}: fragment entries != clause count")

    def __len__(self):
        return len(self.clauses)

    @property
    def gold_labels(self) -> list[str | None]:
        return [c.gold_label for c in self.clauses]


@dataclass(frozen=True)
class Corpus:
    label_set: LabelSet
    paragraphs: tuple[Paragraph, ...]
    split: str = "unsplit"

    def __post_init__(self):
        object.__setattr__(self, "paragraphs", tuple(self.paragraphs))
        if self.split not in ("train", "dev", "test", "unsplit"):
            raise ValueError(f"bad split {self.split!r}")
        allowed = set(self.label_set.labels)
        for p in self.paragraphs:
            for c in p.clauses:
                if c.gold_label is not None and c.gold_label not in allowed:
                    raise ValueError(
                        f"paragraph {p.id!r}: label {c.gold_label!r} not in label set "
                        f"{self.label_set.name!r}"
                    )

    def __len__(self):
        return len(self.paragraphs)


def _tokenize(text: str) -> tuple[str, ...]:
    return tuple(text.lower().split())


# ---------------------------------------------------------------------------
# BIO codecs


def encode_bio(labels, label_set: LabelSet) -> list[str]:
    """none -> O; run starts -> B_label; run continuations -> I_label."""
    out = []
    prev = None
    for lab in labels:
        if lab not in label_set.labels:
            raise ValueError(f"unknown label {lab!r} for label set {label_set.name!r}")
        if lab == label_set.none_label:
            out.append("O")
        elif lab == prev:
            out.append(f"I_{lab}")
        else:
            out.append(f"B_{lab}")
        prev = lab
    return out


def decode_bio(bio, label_set: LabelSet) -> list[str]:
    """Inverse of encode_bio; stray I_x is repaired to mean the same label x."""
    valid = set(label_set.bio_tags())
    out = []
    for tag in bio:
        if tag not in valid:
            raise ValueError(f"unknown BIO tag {tag!r} for label set {label_set.name!r}")
        if tag == "O":
            out.append(label_set.none_label)
        else:
            out.append(tag[2:])
    return out


# ---------------------------------------------------------------------------
# importers


def parse_rct(path) -> Corpus:
    """Abstract records: "###id" header, then one "LABEL<TAB>sentence" per line."""
    path = Path(path)
    paragraphs = []
    current_id = None
    clauses: list[Clause] = []
    known = {lab.upper(): lab for lab in RCT_LABELS.labels if lab != RCT_LABELS.none_label}

    def flush(line_no):
        nonlocal current_id, clauses
        if current_id is None:
            return
        if not clauses:
            raise ParseError(f"record {current_id!r} has no sentences", path, line_no)
        paragraphs.append(Paragraph(current_id, tuple(clauses)))
        current_id, clauses = None, []

    line_no = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                flush(line_no)
                continue
            if line.startswith("###"):
                flush(line_no)
                current_id = line[3:].strip()
                if not current_id:
                    raise ParseError("record header has no identifier", path, line_no)
                continue
            if current_id is None:
                raise ParseError("sentence line outside any record", path, line_no)
            if "\t" not in line:
                raise ParseError("malformed line: expected LABEL<TAB>text", path, line_no)
            label_raw, text = line.split("\t", 1)
            label = known.get(label_raw.strip().upper())
            if label is None:
                raise ParseError(f"unknown label {label_raw.strip()!r}", path, line_no)
            clauses.append(Clause(_tokenize(text), raw_text=text, gold_label=label))
    flush(line_no)
    return Corpus(RCT_LABELS, tuple(paragraphs))


def write_rct(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in corpus.paragraphs:
            fh.write(f"###{p.id}\n")
            for c in p.clauses:
                fh.write(f"{(c.gold_label or '').upper()}\t{c.text}\n")
            fh.write("\n")


def parse_scidt(path) -> Corpus:
    """Clause TSV: paragraph_id, clause_index, clause_text, label."""
    path = Path(path)
    rows_by_pid: dict[str, list[tuple[int, str, str, int]]] = {}
    order: list[str] = []
    allowed = set(SCIDT_LABELS.labels)
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"expected 4 tab-separated fields, got {len(parts)}", path, line_no)
            pid, idx_raw, text, label = parts
            try:
                idx = int(idx_raw)
            except ValueError:
                raise ParseError(f"clause_index {idx_raw!r} is not an integer", path, line_no)
            if label not in allowed:
                raise ParseError(f"unknown label {label!r}", path, line_no)
            if pid not in rows_by_pid:
                rows_by_pid[pid] = []
                order.append(pid)
            rows_by_pid[pid].append((idx, text, label, line_no))
    paragraphs = []
    for pid in order:
        rows = sorted(rows_by_pid[pid], key=lambda r: r[0])
        first = rows[0][0]
        for offset, (idx, _, _, line_no) in enumerate(rows):
            if idx != first + offset:
                raise ParseError(
                    f"paragraph {pid!r}: clause_index {idx} breaks contiguity", path, line_no
                )
        clauses = tuple(
            Clause(_tokenize(text), raw_text=text, gold_label=label) for _, text, label, _ in rows
        )
        paragraphs.append(Paragraph(pid, clauses))
    return Corpus(SCIDT_LABELS, tuple(paragraphs))


def write_scidt(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in corpus.paragraphs:
            for i, c in enumerate(p.clauses):
                fh.write(f"{p.id}\t{i}\t{c.text}\t{c.gold_label}\n")


def parse_coda(path) -> Corpus:
    """Segment JSONL: {"id":..., "segments":[{"text":..., "label":...}]} per line."""
    path = Path(path)
    paragraphs = []
    allowed = set(CODA_LABELS.labels)
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", path, line_no)
            try:
                pid = str(doc["id"])
                segments = doc["segments"]
            except (KeyError, TypeError):
                raise ParseError('expected object with "id" and "segments"', path, line_no)
            clauses = []
            for seg in segments:
                label = seg.get("label")
                if label not in allowed:
                    raise ParseError(f"unknown label {label!r}", path, line_no)
                text = seg.get("text", "")
                clauses.append(Clause(_tokenize(text), raw_text=text, gold_label=label))
            if not clauses:
                raise ParseError(f"abstract {pid!r} has no segments", path, line_no)
            paragraphs.append(Paragraph(pid, tuple(clauses)))
    return Corpus(CODA_LABELS, tuple(paragraphs))


def write_coda(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in corpus.paragraphs:
            doc = {
                "id": p.id,
                "segments": [{"text": c.text, "label": c.gold_label} for c in p.clauses],
            }
            fh.write(json.dumps(doc, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# canonical JSONL interchange


def paragraph_to_json(p: Paragraph) -> dict:
    doc: dict = {
        "id": p.id,
        "clauses": [
            {
                "tokens": list(c.tokens),
                "label": c.gold_label,
                **({"text": c.raw_text} if c.raw_text and c.raw_text != " ".join(c.tokens) else {}),
            }
            for c in p.clauses
        ],
    }
    if p.fragment is not None:
        doc["fragment"] = {
            "referred": [sorted(c.canonical for c in s) for s in p.fragment.referred],
            "mentioned": [sorted(c.canonical for c in s) for s in p.fragment.mentioned],
        }
    return doc


def paragraph_from_json(doc: dict) -> Paragraph:
    clauses = tuple(
        Clause(
            tuple(c["tokens"]),
            raw_text=c.get("text", ""),
            gold_label=c.get("label"),
        )
        for c in doc["clauses"]
    )
    fragment = None
    if "fragment" in doc and doc["fragment"] is not None:
        frag = doc["fragment"]
        fragment = FragmentAnnotation.from_sets(
            [{SubfigureCode.parse(s) for s in codes} for codes in frag["referred"]],
            [{SubfigureCode.parse(s) for s in codes} for codes in frag["mentioned"]],
        )
    return Paragraph(str(doc["id"]), clauses, fragment)


def write_jsonl(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in corpus.paragraphs:
            fh.write(json.dumps(paragraph_to_json(p), ensure_ascii=False) + "\n")


def read_jsonl(path, label_set: LabelSet | None = None, split: str = "unsplit") -> Corpus:
    """Load canonical JSONL; label set inferred from the gold labels if not given."""
    path = Path(path)
    paragraphs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                paragraphs.append(paragraph_from_json(json.loads(raw)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"bad paragraph record: {e}", path, line_no)
    if label_set is None:
        observed = {
            c.gold_label for p in paragraphs for c in p.clauses if c.gold_label is not None
        }
        label_set = infer_label_set(observed)
    return Corpus(label_set, tuple(paragraphs), split=split)
