"""Word-to-sentence encoder: projection, LSTM attention scoring, summarization.

Token vectors are projected down, scored left-to-right by a unidirectional
LSTM whose hidden states are dotted with a trainable score vector, and the
softmax of those scores pools the original (unprojected) token vectors into
one summary vector per clause.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numeric as nm
from .numeric import Tensor

__all__ = [
    "LstmParams",
    "init_lstm",
    "lstm_step",
    "run_lstm",
    "EncoderParams",
    "init_encoder",
    "EmbeddedParagraph",
    "project",
    "attend",
    "summarize",
    "attention_weights",
    "attention_report",
    "render_attention_tsv",
    "render_attention_html",
]

INIT_SCALE = 0.05


@dataclass
class LstmParams:
    """Standard LSTM cell weights; gate order is input, forget, candidate, output."""

    W: Tensor  # (input_dim, 4*hidden)
    U: Tensor  # (hidden, 4*hidden)
    b: Tensor  # (1, 4*hidden)

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]

    @property
    def input_size(self) -> int:
        return self.W.shape[0]


def _uniform(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)


def init_lstm(rng: np.random.Generator, input_dim: int, hidden_size: int) -> LstmParams:
    W = _uniform(rng, (input_dim, 4 * hidden_size))
    U = _uniform(rng, (hidden_size, 4 * hidden_size))
    b = _uniform(rng, (1, 4 * hidden_size))
    b[0, hidden_size : 2 * hidden_size] = 1.0  # forget gate starts open
    return LstmParams(Tensor(W), Tensor(U), Tensor(b))


def lstm_step(params: LstmParams, x: Tensor, h: Tensor, c: Tensor):
    hs = params.hidden_size
    z = nm.add(nm.add(nm.matmul(x, params.W), nm.matmul(h, params.U)), params.b)
    i = nm.sigmoid(z[:, 0:hs])
    f = nm.sigmoid(z[:, hs : 2 * hs])
    g = nm.tanh(z[:, 2 * hs : 3 * hs])
    o = nm.sigmoid(z[:, 3 * hs : 4 * hs])
    c2 = nm.add(nm.mul(f, c), nm.mul(i, g))
    h2 = nm.mul(o, nm.tanh(c2))
    return h2, c2


def run_lstm(params: LstmParams, xs: Tensor, reverse: bool = False) -> Tensor:
    """Unroll over the rows of xs (n, input_dim); returns hidden states (n, hidden)."""
    n = xs.shape[0]
    hs = params.hidden_size
    h = Tensor(np.zeros((1, hs)))
    c = Tensor(np.zeros((1, hs)))
    order = range(n - 1, -1, -1) if reverse else range(n)
    rows: list[Tensor | None] = [None] * n
    for t in order:
        h, c = lstm_step(params, xs[t : t + 1], h, c)
        rows[t] = h
    return nm.concat(rows, axis=0)


@dataclass
class EncoderParams:
    P: Tensor  # (d, p) projection
    attn: LstmParams  # input p, hidden h
    s: Tensor  # (h, 1) score vector

    @property
    def d(self) -> int:
        return self.P.shape[0]

    @property
    def p(self) -> int:
        return self.P.shape[1]

    @property
    def h(self) -> int:
        return self.s.shape[0]


def init_encoder(rng: np.random.Generator, d: int, p: int, h: int) -> EncoderParams:
    P = Tensor(_uniform(rng, (d, p)))
    attn = init_lstm(rng, p, h)
    s = Tensor(_uniform(rng, (h, 1)))
    return EncoderParams(P, attn, s)


@dataclass(frozen=True)
class EmbeddedParagraph:
    """Zero-padded token-embedding block for one paragraph window.

    Masks are left-aligned: real clauses come first, and real tokens fill a
    prefix of each clause row.
    """

    D: np.ndarray  # (c, w, d) float64
    token_mask: np.ndarray  # (c, w) bool
    clause_mask: np.ndarray  # (c,) bool
    tokens: tuple[tuple[str, ...], ...]  # real token strings per real clause

    def __post_init__(self):
        c, w, _ = self.D.shape
        if self.token_mask.shape != (c, w) or self.clause_mask.shape != (c,):
            raise ValueError("mask shapes inconsistent with D")
        counts = self.token_mask.sum(axis=1)
        for i in range(c):
            if self.token_mask[i, : counts[i]].sum() != counts[i]:
                raise ValueError(f"clause {i}: token mask is not left-aligned")
        if not np.array_equal(self.clause_mask, counts > 0):
            raise ValueError("clause_mask must flag exactly the clauses with real tokens")
        n = int(self.clause_mask.sum())
        if self.clause_mask[:n].sum() != n:
            raise ValueError("clause mask is not left-aligned")
        if np.any(self.D[~self.token_mask] != 0.0):
            raise ValueError("masked positions must hold zero embeddings")
        if len(self.tokens) != n:
            raise ValueError("token strings must cover exactly the real clauses")

    @property
    def n_clauses(self) -> int:
        return int(self.clause_mask.sum())

    @property
    def token_counts(self) -> np.ndarray:
        return self.token_mask.sum(axis=1)

    @property
    def c(self) -> int:
        return self.D.shape[0]

    @property
    def w(self) -> int:
        return self.D.shape[1]

    @property
    def d(self) -> int:
        return self.D.shape[2]


def from_token_vectors(clauses, c: int, w: int, dim: int) -> EmbeddedParagraph:
    """Assemble a padded block from [(tokens, vectors)] pairs, truncating to w."""
    if len(clauses) > c:
        raise ValueError(f"{len(clauses)} clauses exceed window capacity c={c}")
    D = np.zeros((c, w, dim))
    token_mask = np.zeros((c, w), dtype=bool)
    kept_tokens = []
    for i, (tokens, vectors) in enumerate(clauses):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] != dim:
            raise ValueError(f"clause {i}: expected (*, {dim}) vectors, got {vectors.shape}")
        if len(tokens) != vectors.shape[0]:
            raise ValueError(f"clause {i}: {len(tokens)} tokens vs {vectors.shape[0]} vectors")
        if vectors.shape[0] == 0:
            raise ValueError(f"clause {i} has no token vectors")
        u = min(vectors.shape[0], w)
        D[i, :u] = vectors[:u]
        token_mask[i, :u] = True
        kept_tokens.append(tuple(tokens[:u]))
    clause_mask = token_mask.any(axis=1)
    return EmbeddedParagraph(D, token_mask, clause_mask, tuple(kept_tokens))


# ---------------------------------------------------------------------------
# encoder operations


def project(ep: EmbeddedParagraph, params: EncoderParams) -> Tensor:
    """tanh(D @ P) per token; padding rows stay zero since tanh(0) = 0."""
    c, w, d = ep.D.shape
    if d != params.d:
        raise ValueError(f"embedding dim {d} != projection rows {params.d}")
    flat = nm.reshape(Tensor(ep.D), (c * w, d))
    return nm.reshape(nm.tanh(nm.matmul(flat, params.P)), (c, w, params.p))


def attend(projected_clause, mask, params: EncoderParams) -> Tensor:
    """Attention distribution over one clause's tokens; zeros at padding.

    Runs the attention LSTM left-to-right over the unmasked prefix, scores
    hidden states against the score vector, and softmaxes. Requires a
    left-aligned mask with at least one real token.
    """
    x = nm.astensor(projected_clause)
    mask = np.asarray(mask, dtype=bool)
    w = x.shape[0]
    if mask.shape != (w,):
        raise ValueError("mask length must equal token capacity")
    u = int(mask.sum())
    if u == 0:
        raise ValueError("cannot attend over an all-masked clause")
    if mask[:u].sum() != u:
        raise ValueError("token mask must be left-aligned")
    if x.shape[1] != params.p:
        raise ValueError(f"projected dim {x.shape[1]} != p={params.p}")
    h = run_lstm(params.attn, x[0:u])
    scores = nm.reshape(nm.matmul(h, params.s), (u,))
    a = nm.softmax(scores)
    if u < w:
        a = nm.concat([a, Tensor(np.zeros(w - u))], axis=0)
    return a


def summarize(ep: EmbeddedParagraph, A) -> Tensor:
    """Weighted sums D_summ[i] = A[i] . D[i]; masked clauses give zero rows."""
    A = nm.astensor(A)
    c, w, d = ep.D.shape
    if A.shape != (c, w):
        raise ValueError(f"attention shape {A.shape} != ({c}, {w})")
    counts = ep.token_counts
    rows = []
    for i in range(c):
        u = int(counts[i])
        if u == 0:
            rows.append(Tensor(np.zeros((1, d))))
            continue
        a_row = A[i : i + 1, 0:u]
        rows.append(nm.matmul(a_row, Tensor(ep.D[i, :u, :])))
    return nm.concat(rows, axis=0)


def attention_weights(ep: EmbeddedParagraph, params: EncoderParams) -> list[np.ndarray]:
    """Per real clause, the attention over its real tokens (inference mode)."""
    proj = project(ep, params)
    out = []
    for i in range(ep.n_clauses):
        a = attend(proj[i], ep.token_mask[i], params)
        out.append(a.data[: int(ep.token_counts[i])].copy())
    return out


def attention_report(paragraph, ep: EmbeddedParagraph, model) -> list[tuple[int, str, float]]:
    """(clause index, token, weight) triples; weights per clause sum to 1."""
    if len(paragraph.clauses) != ep.n_clauses:
        raise ValueError(
            f"paragraph {paragraph.id!r} has {len(paragraph.clauses)} clauses, "
            f"embedding block has {ep.n_clauses}"
        )
    rows = []
    for i, weights in enumerate(attention_weights(ep, model.encoder)):
        for tok, wgt in zip(ep.tokens[i], weights):
            rows.append((i, tok, float(wgt)))
    return rows


def render_attention_tsv(rows) -> str:
    lines = ["clause_index\ttoken\tweight"]
    for idx, tok, wgt in rows:
        lines.append(f"{idx}\t{tok}\t{wgt:.10f}")
    return "\n".join(lines) + "\n"


def render_attention_html(paragraph_id: str, rows) -> str:
    by_clause: dict[int, list[tuple[str, float]]] = {}
    for idx, tok, wgt in rows:
        by_clause.setdefault(idx, []).append((tok, wgt))
    parts = [
        "<!doctype html><html><head><meta charset='utf-8'>",
        f"<title>attention {paragraph_id}</title>",
        "<style>body{font-family:sans-serif} .tok{padding:1px 2px;margin:1px;"
        "display:inline-block;border-radius:2px}</style></head><body>",
        f"<h3>paragraph {paragraph_id}</h3>",
    ]
    for idx in sorted(by_clause):
        toks = by_clause[idx]
        peak = max(w for _, w in toks) or 1.0
        spans = "".join(
            f"<span class='tok' style='background:rgba(214,39,40,{w / peak:.3f})'>{tok}</span>"
            for tok, w in toks
        )
        parts.append(f"<div><b>{idx}</b> {spans}</div>")
    parts.append("</body></html>")
    return "\n".join(parts)
