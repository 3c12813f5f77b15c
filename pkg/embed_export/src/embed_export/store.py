"""SDTE embedding store writer.

Container layout (little-endian throughout): magic "SDTE", u32 version,
u32 dim, encoder name, subword-vocabulary id, u32 paragraph count, u32
truncated-clause count, u32 OOV-token count, then per paragraph its id,
clause count, and per clause the token strings followed by
token_count*dim float32 values. Strings are u32 byte length + UTF-8.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SDTE"
FORMAT_VERSION = 1


def _write_str(fh, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def write_store(
    path,
    dim: int,
    records,
    encoder_name: str,
    vocab_id: str,
    truncated_clauses: int = 0,
    oov_tokens: int = 0,
) -> None:
    """records: [(paragraph_id, [(tokens, vectors float32 (n, dim))])] in order."""
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
                vectors = np.asarray(vectors, dtype="<f4")
                if vectors.shape != (len(tokens), dim):
                    raise ValueError(
                        f"paragraph {pid!r}: vectors {vectors.shape} != ({len(tokens)}, {dim})"
                    )
                fh.write(struct.pack("<I", len(tokens)))
                for tok in tokens:
                    _write_str(fh, tok)
                fh.write(vectors.tobytes())
