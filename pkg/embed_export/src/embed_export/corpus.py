"""Minimal reader for the canonical JSONL corpus interchange.

One paragraph object per line: {"id": ..., "clauses": [{"tokens": [...],
"text"?: ...}, ...]}. Only ids, tokens, and text matter for embedding
export; labels and fragment annotations pass through untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass


@dataclass(frozen=True)
class ClauseText:
    tokens: tuple[str, ...]
    text: str

    @property
    def display(self) -> str:
        return self.text if self.text else " ".join(self.tokens)


@dataclass(frozen=True)
class ParagraphText:
    id: str
    clauses: tuple[ClauseText, ...]


def read_corpus(path) -> list[ParagraphText]:
    paragraphs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                doc = json.loads(raw)
                clauses = tuple(
                    ClauseText(tuple(c["tokens"]), c.get("text", "")) for c in doc["clauses"]
                )
                paragraphs.append(ParagraphText(str(doc["id"]), clauses))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ValueError(f"{path}:{line_no}: bad paragraph record: {e}") from None
    return paragraphs
