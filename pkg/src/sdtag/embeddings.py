"""Token-embedding store files: binary container read/write and lookup.

Layout (all little-endian): magic "SDTE", u32 version, u32 dim, encoder
name, subword-vocabulary id, u32 paragraph count, u32 truncated-clause
count, u32 OOV-token count, then per paragraph its id, clause count, and
per clause the token strings followed by token_count*dim float32 values.
Strings are u32 byte length + UTF-8. Vectors are stored float32 and
upcast to float64 on load.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import EmbeddedParagraph, from_token_vectors

__all__ = ["MAGIC", "FORMAT_VERSION", "ClauseVectors", "EmbeddingStore", "write_store", "read_store", "embed_paragraph"]

MAGIC = b"SDTE"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ClauseVectors:
    tokens: tuple[str, ...]
    vectors: np.ndarray  # (n_tokens, dim) float64


class EmbeddingStore:
    """In-memory view of one store file, keyed by paragraph id."""

    def __init__(self, dim, encoder_name, vocab_id, records, truncated_clauses=0, oov_tokens=0):
        self.dim = int(dim)
        self.encoder_name = encoder_name
        self.vocab_id = vocab_id
        self.truncated_clauses = int(truncated_clauses)
        self.oov_tokens = int(oov_tokens)
        self._records: dict[str, list[ClauseVectors]] = dict(records)

    def __contains__(self, pid: str) -> bool:
        return pid in self._records

    def __len__(self) -> int:
        return len(self._records)

    @property
    def paragraph_ids(self) -> list[str]:
        return list(self._records)

    def clauses_for(self, pid: str) -> list[ClauseVectors]:
        try:
            return self._records[pid]
        except KeyError:
            raise KeyError(f"no embedding record for paragraph {pid!r}") from None


def _write_str(fh, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode("utf-8")


def write_store(
    path,
    dim: int,
    records,
    encoder_name: str = "synthetic",
    vocab_id: str = "whitespace",
    truncated_clauses: int = 0,
    oov_tokens: int = 0,
) -> None:
    """records: iterable of (paragraph_id, [(tokens, vectors)]) in output order."""
    records = list(records)
    seen = set()
    for pid, _ in records:
        if pid in seen:
            raise ValueError(f"duplicate paragraph id {pid!r}")
        seen.add(pid)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, dim))
        _write_str(fh, encoder_name)
        _write_str(fh, vocab_id)
        fh.write(struct.pack("<III", len(records), truncated_clauses, oov_tokens))
        for pid, clauses in records:
            _write_str(fh, pid)
            fh.write(struct.pack("<I", len(clauses)))
            for tokens, vectors in clauses:
                vectors = np.asarray(vectors, dtype=np.float32)
                if vectors.ndim != 2 or vectors.shape != (len(tokens), dim):
                    raise ValueError(
                        f"paragraph {pid!r}: vectors shape {vectors.shape} "
                        f"does not match {len(tokens)} tokens x dim {dim}"
                    )
                fh.write(struct.pack("<I", len(tokens)))
                for tok in tokens:
                    _write_str(fh, tok)
                fh.write(vectors.astype("<f4").tobytes())


def read_store(path) -> EmbeddingStore:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: not an embedding store (magic {magic!r})")
        version, dim = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported store version {version}")
        encoder_name = _read_str(fh)
        vocab_id = _read_str(fh)
        n_paragraphs, truncated, oov = struct.unpack("<III", fh.read(12))
        records = {}
        for _ in range(n_paragraphs):
            pid = _read_str(fh)
            (n_clauses,) = struct.unpack("<I", fh.read(4))
            clauses = []
            for _ in range(n_clauses):
                (n_tokens,) = struct.unpack("<I", fh.read(4))
                tokens = tuple(_read_str(fh) for _ in range(n_tokens))
                raw = fh.read(4 * n_tokens * dim)
                vectors = np.frombuffer(raw, dtype="<f4").reshape(n_tokens, dim)
                clauses.append(ClauseVectors(tokens, vectors.astype(np.float64)))
            records[pid] = clauses
    return EmbeddingStore(dim, encoder_name, vocab_id, records, truncated, oov)


def embed_paragraph(
    store: EmbeddingStore, paragraph, c: int, w: int, start: int = 0
) -> EmbeddedParagraph:
    """Padded embedding block for paragraph clauses [start, start+c)."""
    recs = store.clauses_for(paragraph.id)
    if len(recs) != len(paragraph.clauses):
        raise ValueError(
            f"paragraph {paragraph.id!r}: store has {len(recs)} clause records "
            f"for {len(paragraph.clauses)} clauses"
        )
    window = recs[start : start + c]
    return from_token_vectors([(cv.tokens, cv.vectors) for cv in window], c, w, store.dim)
