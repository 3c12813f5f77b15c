"""Corpus-to-store export paths."""

from __future__ import annotations

import sys

from .corpus import read_corpus
from .encoders import resolve
from .store import write_store

DEFAULT_MAX_TOKENS = 60


def export_corpus(corpus_path, encoder_name: str, out_path, max_tokens: int = DEFAULT_MAX_TOKENS):
    """Run the named encoder over every clause and write the store.

    Clauses longer than max_tokens are truncated and counted in the header
    stats. Output bytes are deterministic given corpus and encoder.
    """
    encoder = resolve(encoder_name)
    paragraphs = read_corpus(corpus_path)
    records = []
    truncated = 0
    for p in paragraphs:
        clauses = []
        for clause in p.clauses:
            tokens, vectors = encoder.encode_clause(clause)
            if len(tokens) > max_tokens:
                truncated += 1
                print(
                    f"warning: paragraph {p.id!r}: clause truncated {len(tokens)} -> {max_tokens} tokens",
                    file=sys.stderr,
                )
                tokens, vectors = tokens[:max_tokens], vectors[:max_tokens]
            clauses.append((tokens, vectors))
        records.append((p.id, clauses))
    write_store(
        out_path,
        encoder.dim,
        records,
        encoder_name=encoder_name,
        vocab_id=encoder.vocab_id,
        truncated_clauses=truncated,
        oov_tokens=encoder.oov_tokens,
    )
    return {
        "paragraphs": len(records),
        "dim": encoder.dim,
        "truncated_clauses": truncated,
        "oov_tokens": encoder.oov_tokens,
    }


def export_static(corpus_path, table_path, out_path, max_tokens: int = DEFAULT_MAX_TOKENS):
    """Static-table pathway; identical container, lookup-based vectors."""
    return export_corpus(corpus_path, f"static:{table_path}", out_path, max_tokens=max_tokens)
