"""Encoder registry.

Names resolve as:
  hash:<dim>      deterministic per-token pseudo-embeddings (test/synthetic)
  static:<path>   GloVe-style text table lookup, OOV -> zero vector
  hf:<model>      transformers final-layer hidden states (needs local model)

Every encoder maps one clause to (subword_tokens, float32 vectors) and
reports its vector dimension and subword-vocabulary identifier.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


class HashEncoder:
    """One fixed pseudo-random vector per distinct token string.

    Deterministic across processes and platforms: vectors are seeded from
    the token's blake2b digest, tokens are the whitespace tokens as-is.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"hash encoder dim must be positive, got {dim}")
        self.dim = dim
        self.vocab_id = "whitespace"
        self.oov_tokens = 0

    def encode_clause(self, clause):
        tokens = tuple(clause.tokens)
        if not tokens:
            return tokens, np.zeros((0, self.dim), dtype=np.float32)
        vectors = np.stack([self._vector(t) for t in tokens])
        return tokens, vectors

    def _vector(self, token: str) -> np.ndarray:
        seed = int.from_bytes(
            hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little"
        )
        return np.random.default_rng(seed).standard_normal(self.dim).astype(np.float32)


class StaticTableEncoder:
    """Whitespace-token lookup in a "word v1 v2 ..." text table."""

    def __init__(self, table_path):
        self.table: dict[str, np.ndarray] = {}
        self.oov_tokens = 0
        dim = None
        with open(table_path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    continue
                word, values = parts[0], parts[1:]
                if dim is None:
                    dim = len(values)
                elif len(values) != dim:
                    raise ValueError(
                        f"{table_path}:{line_no}: vector of length {len(values)}, table dim {dim}"
                    )
                self.table[word] = np.asarray([float(v) for v in values], dtype=np.float32)
        if dim is None:
            raise ValueError(f"{table_path}: empty vector table")
        self.dim = dim
        self.vocab_id = f"static:{Path(table_path).name}"

    def encode_clause(self, clause):
        tokens = tuple(clause.tokens)
        vectors = np.zeros((len(tokens), self.dim), dtype=np.float32)
        for i, tok in enumerate(tokens):
            vec = self.table.get(tok.lower())
            if vec is None:
                self.oov_tokens += 1
            else:
                vectors[i] = vec
        return tokens, vectors


class HfEncoder:
    """Final-layer hidden states of a locally available transformer."""

    def __init__(self, model_name: str):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as e:
            raise ValueError(f"encoder hf:{model_name} needs transformers+torch installed") from e
        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModel.from_pretrained(model_name)
        self.model.eval()
        self.dim = int(self.model.config.hidden_size)
        self.vocab_id = model_name
        self.oov_tokens = 0

    def encode_clause(self, clause):
        text = clause.display
        enc = self.tokenizer(text, return_tensors="pt", truncation=True)
        with self._torch.no_grad():
            hidden = self.model(**enc).last_hidden_state[0]
        tokens = self.tokenizer.convert_ids_to_tokens(enc["input_ids"][0])
        return tuple(tokens), hidden.numpy().astype(np.float32)


def resolve(name: str):
    if name.startswith("hash:"):
        return HashEncoder(int(name.split(":", 1)[1]))
    if name.startswith("static:"):
        return StaticTableEncoder(name.split(":", 1)[1])
    if name.startswith("hf:"):
        return HfEncoder(name.split(":", 1)[1])
    raise ValueError(f"unknown encoder {name!r} (expected hash:<dim>, static:<path>, or hf:<model>)")
