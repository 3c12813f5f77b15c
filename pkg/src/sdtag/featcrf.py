"""Feature-based linear-chain CRF for block boundary tagging.

Emissions are sums of per-(feature, tag) weights over each clause's sparse
feature set; the penalized conditional log-likelihood is maximized with
L-BFGS using the exact forward-backward gradient. The tag set is the fixed
untyped block scheme B/I/O.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .corpus import Paragraph
from .numeric import logsumexp
from .tagger import viterbi

__all__ = [
    "TAGS",
    "extract_features",
    "FeatCrfModel",
    "train_featcrf",
    "decode_featcrf",
    "sequence_log_likelihood",
    "penalized_objective",
]

TAGS = ("B", "I", "O")
_TAG_INDEX = {t: i for i, t in enumerate(TAGS)}


def _clause_base_features(tokens, tag: str | None, mentions) -> list[str]:
    toks = [t.lower() for t in tokens]
    feats = [f"uni:{t}" for t in toks]
    feats += [f"bi:{a}_{b}" for a, b in zip(toks, toks[1:])]
    feats += [f"tri:{a}_{b}_{c}" for a, b, c in zip(toks, toks[1:], toks[2:])]
    if tag is not None:
        feats.append(f"tag:{tag}")
    for code in sorted(mentions):
        feats.append(f"fig:{code.canonical}")
    if mentions:
        feats.append("hasfig")
    return feats


def extract_features(
    paragraph: Paragraph, discourse_tags=None, mentions=None
) -> list[frozenset[str]]:
    """Per clause: own n-gram/tag/mention features mirrored into the
    prev:/cur:/next: namespaces of its neighbors; sentinels at boundaries."""
    n = len(paragraph.clauses)
    if discourse_tags is not None and len(discourse_tags) != n:
        raise ValueError("discourse_tags length != clause count")
    if mentions is None:
        mentions = [frozenset() for _ in range(n)]
    if len(mentions) != n:
        raise ValueError("mentions length != clause count")
    base = [
        _clause_base_features(
            paragraph.clauses[i].tokens,
            discourse_tags[i] if discourse_tags is not None else None,
            mentions[i],
        )
        for i in range(n)
    ]
    out = []
    for i in range(n):
        feats = {f"cur:{f}" for f in base[i]}
        if i > 0:
            feats.update(f"prev:{f}" for f in base[i - 1])
        else:
            feats.add("prev:BOS")
        if i + 1 < n:
            feats.update(f"next:{f}" for f in base[i + 1])
        else:
            feats.add("next:EOS")
        out.append(frozenset(feats))
    return out


@dataclass
class FeatCrfModel:
    weights: dict[str, np.ndarray]  # feature -> (3,) per-tag scores
    transitions: np.ndarray  # (3, 3)
    l2: float

    @property
    def tags(self) -> tuple[str, ...]:
        return TAGS

    def emissions(self, features) -> np.ndarray:
        em = np.zeros((len(features), len(TAGS)))
        for t, feats in enumerate(features):
            for f in feats:
                w = self.weights.get(f)
                if w is not None:
                    em[t] += w
        return em

    def to_text(self) -> str:
        """Deterministic sorted (feature, tag, weight) table for diffing."""
        lines = [f"l2\t{float(self.l2)!r}"]
        for a in TAGS:
            for b in TAGS:
                lines.append(
                    f"trans\t{a}\t{b}\t{float(self.transitions[_TAG_INDEX[a], _TAG_INDEX[b]])!r}"
                )
        for feat in sorted(self.weights):
            for tag in TAGS:
                lines.append(f"feat\t{feat}\t{tag}\t{float(self.weights[feat][_TAG_INDEX[tag]])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FeatCrfModel":
        l2 = 0.0
        transitions = np.zeros((3, 3))
        weights: dict[str, np.ndarray] = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            parts = line.split("\t")
            if parts[0] == "l2":
                l2 = float(parts[1])
            elif parts[0] == "trans":
                transitions[_TAG_INDEX[parts[1]], _TAG_INDEX[parts[2]]] = float(parts[3])
            elif parts[0] == "feat":
                w = weights.setdefault(parts[1], np.zeros(3))
                w[_TAG_INDEX[parts[2]]] = float(parts[3])
            else:
                raise ValueError(f"bad model line: {line!r}")
        return cls(weights, transitions, l2)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "FeatCrfModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def _index_sequences(sequences):
    feat_index: dict[str, int] = {}
    indexed = []
    for features, gold in sequences:
        rows = []
        for feats in features:
            ids = []
            for f in sorted(feats):
                if f not in feat_index:
                    feat_index[f] = len(feat_index)
                ids.append(feat_index[f])
            rows.append(np.array(ids, dtype=np.intp))
        gold_ids = np.array([_TAG_INDEX[t] for t in gold], dtype=np.intp)
        if len(rows) != len(gold_ids):
            raise ValueError("features and gold tags misaligned")
        indexed.append((rows, gold_ids))
    return feat_index, indexed


def _forward_backward(em: np.ndarray, trans: np.ndarray):
    n, K = em.shape
    log_alpha = np.zeros((n, K))
    log_alpha[0] = em[0]
    for t in range(1, n):
        log_alpha[t] = em[t] + logsumexp(log_alpha[t - 1][:, None] + trans, axis=0)
    log_beta = np.zeros((n, K))
    for t in range(n - 2, -1, -1):
        log_beta[t] = logsumexp(trans + em[t + 1] + log_beta[t + 1], axis=1)
    log_z = logsumexp(log_alpha[-1])
    return log_alpha, log_beta, float(log_z)


def _sequence_ll_and_grad(rows, gold, W, trans, grad_W, grad_T):
    n, K = len(rows), len(TAGS)
    em = np.zeros((n, K))
    for t, ids in enumerate(rows):
        if ids.size:
            em[t] = W[ids].sum(axis=0)
    log_alpha, log_beta, log_z = _forward_backward(em, trans)
    gold_score = em[np.arange(n), gold].sum() + trans[gold[:-1], gold[1:]].sum()
    ll = gold_score - log_z

    node_marg = np.exp(log_alpha + log_beta - log_z)  # (n, K)
    for t, ids in enumerate(rows):
        if ids.size:
            np.add.at(grad_W, ids, -node_marg[t])
            grad_W[ids, gold[t]] += 1.0
    for t in range(n - 1):
        edge = np.exp(log_alpha[t][:, None] + trans + em[t + 1] + log_beta[t + 1] - log_z)
        grad_T -= edge
        grad_T[gold[t], gold[t + 1]] += 1.0
    return ll


def sequence_log_likelihood(features, gold, model: FeatCrfModel) -> float:
    """Unpenalized conditional log-likelihood of one tagged sequence."""
    em = model.emissions(features)
    gold_ids = np.array([_TAG_INDEX[t] for t in gold], dtype=np.intp)
    _, _, log_z = _forward_backward(em, model.transitions)
    n = len(gold_ids)
    score = em[np.arange(n), gold_ids].sum() + model.transitions[gold_ids[:-1], gold_ids[1:]].sum()
    return float(score - log_z)


def penalized_objective(theta: np.ndarray, indexed, n_feats: int, l2: float):
    """(negative penalized LL, its gradient) over all training sequences."""
    K = len(TAGS)
    W = theta[: n_feats * K].reshape(n_feats, K)
    trans = theta[n_feats * K :].reshape(K, K)
    grad_W = np.zeros_like(W)
    grad_T = np.zeros_like(trans)
    ll = 0.0
    for rows, gold in indexed:
        ll += _sequence_ll_and_grad(rows, gold, W, trans, grad_W, grad_T)
    penalty = 0.5 * l2 * float(theta @ theta)
    grad = np.concatenate([grad_W.reshape(-1), grad_T.reshape(-1)]) - l2 * theta
    return -(ll - penalty), -grad


def train_featcrf(sequences, l2: float = 1.0, seed: int = 0) -> FeatCrfModel:
    """Fit by L-BFGS to gradient tolerance 1e-5 or 500 iterations.

    The objective is concave, so the result is seed-independent up to
    tolerance; `seed` is accepted for interface symmetry only.
    """
    sequences = list(sequences)
    if not sequences:
        raise ValueError("empty training set")
    del seed  # concave objective from a fixed zero start
    feat_index, indexed = _index_sequences(sequences)
    n_feats = len(feat_index)
    x0 = np.zeros(n_feats * 3 + 9)
    res = minimize(
        penalized_objective,
        x0,
        args=(indexed, n_feats, l2),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": 500, "ftol": 1e-12, "gtol": 1e-5},
    )
    W = res.x[: n_feats * 3].reshape(n_feats, 3)
    trans = res.x[n_feats * 3 :].reshape(3, 3)
    weights = {f: W[i].copy() for f, i in feat_index.items()}
    return FeatCrfModel(weights, trans, l2)


def decode_featcrf(features, model: FeatCrfModel) -> list[str]:
    """Viterbi over feature-scored emissions; ties go to B < I < O."""
    em = model.emissions(features)
    path = viterbi(em, model.transitions)
    return [TAGS[i] for i in path]
