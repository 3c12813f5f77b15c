"""Block-based evidence fragment reduction.

A "block" is a maximal run of contiguous clauses referring to one identical
set of subfigure codes. Reference sequences encode to a 3-tag B/I/O stream;
decoding localizes blocks from the stream and fills each with the union of
the codes explicitly mentioned inside it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

__all__ = [
    "SubfigureCode",
    "FragmentAnnotation",
    "extract_mentions",
    "encode_blocks",
    "decode_blocks",
    "fragment_f1",
    "fragment_set_f1",
]


@dataclass(frozen=True, order=True)
class SubfigureCode:
    """A figure panel like 1A, or a whole figure like 3 (no panel)."""

    figure: int
    panel: str = ""  # single uppercase letter, or "" for figure-only

    def __post_init__(self):
        if self.figure <= 0:
            raise ValueError("figure number must be positive")
        if self.panel and (len(self.panel) != 1 or not self.panel.isupper()):
            raise ValueError(f"panel must be one uppercase letter, got {self.panel!r}")

    @property
    def canonical(self) -> str:
        return f"{self.figure}{self.panel}"

    @classmethod
    def parse(cls, text: str) -> "SubfigureCode":
        m = re.fullmatch(r"(\d+)([A-Za-z]?)", text.strip())
        if not m:
            raise ValueError(f"not a subfigure code: {text!r}")
        return cls(int(m.group(1)), m.group(2).upper())

    def __str__(self):
        return self.canonical


_KEYWORD = re.compile(r"\bfig(?:ure)?s?\b(?:\s*\.)?", re.IGNORECASE)
_CODE = re.compile(r"(\d+)([a-z])?(?![a-z0-9])", re.IGNORECASE)
_LETTER = re.compile(r"([a-z])(?![a-z0-9])", re.IGNORECASE)
_SEP = re.compile(r"(?:,|;|&|\band\b)", re.IGNORECASE)
_DASH = re.compile(r"[-‐‑‒–—]")


def _expand_range(lo: SubfigureCode, hi: SubfigureCode) -> list[SubfigureCode]:
    if lo.panel and hi.panel and lo.figure == hi.figure and lo.panel <= hi.panel:
        return [SubfigureCode(lo.figure, chr(c)) for c in range(ord(lo.panel), ord(hi.panel) + 1)]
    if not lo.panel and not hi.panel and lo.figure <= hi.figure <= lo.figure + 10:
        return [SubfigureCode(f) for f in range(lo.figure, hi.figure + 1)]
    return [lo, hi]  # malformed range: keep both endpoints


def extract_mentions(clause_text: str) -> set[SubfigureCode]:
    """Explicit subfigure mentions per the figure-reference grammar.

    "fig"/"fig."/"figure(s)" introduces a list of codes; bare panel letters
    inherit the last figure number ("figures 2b and c"), dashes expand to
    ranges ("3a - c"), comma/and separate list items. No match: empty set.
    """
    found: set[SubfigureCode] = set()
    for kw in _KEYWORD.finditer(clause_text):
        pos = kw.end()
        current_fig: int | None = None
        last: SubfigureCode | None = None
        pending_range = False
        while pos < len(clause_text):
            rest = clause_text[pos:]
            stripped = rest.lstrip()
            pos += len(rest) - len(stripped)
            if pos >= len(clause_text):
                break
            m = _CODE.match(clause_text, pos)
            if m:
                code = SubfigureCode(int(m.group(1)), (m.group(2) or "").upper())
                if pending_range and last is not None:
                    found.update(_expand_range(last, code))
                    pending_range = False
                else:
                    found.add(code)
                current_fig = code.figure
                last = code
                pos = m.end()
                continue
            m = _LETTER.match(clause_text, pos)
            if m and current_fig is not None:
                code = SubfigureCode(current_fig, m.group(1).upper())
                if pending_range and last is not None:
                    found.update(_expand_range(last, code))
                    pending_range = False
                else:
                    found.add(code)
                last = code
                pos = m.end()
                continue
            m = _DASH.match(clause_text, pos)
            if m and last is not None:
                pending_range = True
                pos = m.end()
                continue
            m = _SEP.match(clause_text, pos)
            if m:
                pos = m.end()
                continue
            break
    return found


@dataclass(frozen=True)
class FragmentAnnotation:
    """Per-clause semantically referred codes plus explicit surface mentions."""

    referred: tuple[frozenset[SubfigureCode], ...]
    mentioned: tuple[frozenset[SubfigureCode], ...]

    def __post_init__(self):
        if len(self.referred) != len(self.mentioned):
            raise ValueError("referred and mentioned must have one entry per clause")

    @classmethod
    def from_sets(cls, referred, mentioned) -> "FragmentAnnotation":
        return cls(
            tuple(frozenset(s) for s in referred),
            tuple(frozenset(s) for s in mentioned),
        )

    def __len__(self):
        return len(self.referred)


def encode_blocks(referred) -> list[str]:
    """Per-clause code sets -> B/I/O stream (I: same non-empty set as previous)."""
    tags = []
    prev: frozenset = frozenset()
    for sets in referred:
        cur = frozenset(sets)
        if not cur:
            tags.append("O")
        elif cur == prev:
            tags.append("I")
        else:
            tags.append("B")
        prev = cur
    return tags


def decode_blocks(bio, mentioned) -> list[frozenset[SubfigureCode]]:
    """Fill each maximal B(I)* block with the union of its explicit mentions.

    A stray I (no preceding B/I) starts a new block. Blocks whose clauses
    mention nothing decode to empty sets; the block-based assumption does
    not hold for them.
    """
    bio = list(bio)
    mentioned = [frozenset(m) for m in mentioned]
    if len(bio) != len(mentioned):
        raise ValueError("bio and mentioned must align")
    out: list[frozenset] = [frozenset()] * len(bio)
    i = 0
    while i < len(bio):
        if bio[i] == "O":
            i += 1
            continue
        start = i
        i += 1
        while i < len(bio) and bio[i] == "I":
            i += 1
        fill = frozenset().union(*mentioned[start:i]) if i > start else frozenset()
        for j in range(start, i):
            out[j] = fill
    return out


def _pair_counts(pred, gold) -> tuple[int, int, int]:
    tp = fp = fn = 0
    for p, g in zip(pred, gold):
        p, g = frozenset(p), frozenset(g)
        tp += len(p & g)
        fp += len(p - g)
        fn += len(g - p)
    return tp, fp, fn


def fragment_f1(pred, gold) -> tuple[float, float, float]:
    """Micro precision/recall/F1 over (clause, code) membership pairs."""
    pred, gold = list(pred), list(gold)
    if len(pred) != len(gold):
        raise ValueError("pred and gold must have the same clause count")
    tp, fp, fn = _pair_counts(pred, gold)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def fragment_set_f1(pred, gold) -> tuple[float, float, float]:
    """Stricter alternative: a clause counts only if its whole set matches."""
    pred, gold = list(pred), list(gold)
    if len(pred) != len(gold):
        raise ValueError("pred and gold must have the same clause count")
    tp = fp = fn = 0
    for p, g in zip(pred, gold):
        p, g = frozenset(p), frozenset(g)
        if p and p == g:
            tp += 1
        else:
            if p:
                fp += 1
            if g:
                fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1
