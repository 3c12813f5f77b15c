"""Evaluation metrics: micro F1, binary F1, confusion, kappa, McNemar."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import LabelSet

__all__ = [
    "micro_f1",
    "binary_f1",
    "cohen_kappa",
    "mcnemar",
    "ConfusionMatrix",
    "confusion",
]


def _flatten_aligned(pred, gold):
    pred, gold = list(pred), list(gold)
    if pred and isinstance(pred[0], (list, tuple)):
        if len(pred) != len(gold):
            raise ValueError("pred and gold have different sequence counts")
        flat_p, flat_g = [], []
        for ps, gs in zip(pred, gold):
            if len(ps) != len(gs):
                raise ValueError("pred and gold sequences misaligned")
            flat_p.extend(ps)
            flat_g.extend(gs)
        return flat_p, flat_g
    if len(pred) != len(gold):
        raise ValueError("pred and gold misaligned")
    return pred, gold


def micro_f1(pred, gold, exclude_label: str | None = None) -> float:
    """Micro-averaged F1; without an excluded class this is plain accuracy."""
    p, g = _flatten_aligned(pred, gold)
    if not p:
        return 0.0
    if exclude_label is None:
        return sum(a == b for a, b in zip(p, g)) / len(p)
    tp = sum(a == b and b != exclude_label for a, b in zip(p, g))
    n_pred = sum(a != exclude_label for a in p)
    n_gold = sum(b != exclude_label for b in g)
    denom = n_pred + n_gold
    return 2 * tp / denom if denom else 0.0


def binary_f1(pred, gold) -> float:
    """F1 of the positive class, with 0 treated as the negative label."""
    p, g = _flatten_aligned(pred, gold)
    tp = sum(a == 1 and b == 1 for a, b in zip(p, g))
    fp = sum(a == 1 and b == 0 for a, b in zip(p, g))
    fn = sum(a == 0 and b == 1 for a, b in zip(p, g))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def cohen_kappa(a, b) -> float:
    a, b = _flatten_aligned(a, b)
    if not a:
        raise ValueError("empty input")
    n = len(a)
    labels = sorted(set(a) | set(b))
    p_o = sum(x == y for x, y in zip(a, b)) / n
    p_e = 0.0
    for lab in labels:
        p_e += (sum(x == lab for x in a) / n) * (sum(y == lab for y in b) / n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def mcnemar(pred_a, pred_b, gold, exact: bool = False) -> tuple[float, float]:
    """Paired test over discordant correct/wrong pairs; returns (statistic, p).

    Continuity-corrected chi-square with one degree of freedom by default;
    `exact` switches to the two-sided binomial test (preferable for b+c < 25).
    """
    pa, g = _flatten_aligned(pred_a, gold)
    pb, g2 = _flatten_aligned(pred_b, gold)
    if len(pa) != len(pb):
        raise ValueError("pred_a and pred_b misaligned")
    b = sum(x == y and u != y for x, u, y in zip(pa, pb, g))
    c = sum(x != y and u == y for x, u, y in zip(pa, pb, g))
    if b + c == 0:
        return 0.0, 1.0
    if exact:
        k = min(b, c)
        n = b + c
        tail = sum(math.comb(n, i) for i in range(k + 1)) / 2.0**n
        return float(k), min(1.0, 2.0 * tail)
    stat = (abs(b - c) - 1.0) ** 2 / (b + c)
    p = math.erfc(math.sqrt(stat / 2.0))  # chi-square survival, 1 dof
    return stat, p


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple[str, ...]
    counts: np.ndarray  # (|L|, |L|) ints, rows = gold, cols = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_normalized(self) -> np.ndarray:
        sums = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(sums > 0, self.counts / sums, 0.0)
        return out

    def to_tsv(self) -> str:
        lines = ["gold\\pred\t" + "\t".join(self.labels)]
        for i, lab in enumerate(self.labels):
            lines.append(lab + "\t" + "\t".join(str(int(x)) for x in self.counts[i]))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "counts": self.counts.astype(int).tolist()}


def confusion(pred, gold, label_set: LabelSet) -> ConfusionMatrix:
    p, g = _flatten_aligned(pred, gold)
    index = {lab: i for i, lab in enumerate(label_set.labels)}
    counts = np.zeros((len(index), len(index)), dtype=np.int64)
    for a, b in zip(p, g):
        if a not in index:
            raise ValueError(f"unknown predicted label {a!r}")
        if b not in index:
            raise ValueError(f"unknown gold label {b!r}")
        counts[index[b], index[a]] += 1
    return ConfusionMatrix(label_set.labels, counts)
