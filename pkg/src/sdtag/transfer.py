"""Transfer learning: majority-vote label mapping and fine-tuning."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .corpus import Corpus
from .metrics import micro_f1
from .tagger import TaggerConfig, TaggerModel, swap_head, tag_corpus, train

__all__ = ["LabelMap", "derive_mapping", "learn_label_map", "zero_shot_eval", "fine_tune"]


@dataclass(frozen=True)
class LabelMap:
    """Total map from source labels to target labels, with its evidence."""

    mapping: dict[str, str]
    contingency: dict[str, dict[str, int]]
    degenerate: frozenset[str] = frozenset()  # source labels never predicted

    def apply(self, labels) -> list[str]:
        return [self.mapping[lab] for lab in labels]

    def to_dict(self) -> dict:
        return {
            "mapping": dict(sorted(self.mapping.items())),
            "contingency": {k: dict(sorted(v.items())) for k, v in sorted(self.contingency.items())},
            "degenerate": sorted(self.degenerate),
        }


def derive_mapping(contingency, target_freq, source_labels, target_none):
    """Majority vote per source label: argmax over its contingency row.

    Ties break toward the globally more frequent target label, then
    lexicographically. A source label with an empty row (never predicted)
    maps to the target none label and is reported as degenerate.
    """
    mapping = {}
    degenerate = set()
    for src in source_labels:
        row = contingency.get(src) or {}
        if not row:
            mapping[src] = target_none
            degenerate.add(src)
            continue
        best = min(row.items(), key=lambda kv: (-kv[1], -target_freq.get(kv[0], 0), kv[0]))
        mapping[src] = best[0]
    return mapping, frozenset(degenerate)


def learn_label_map(
    source_model: TaggerModel, target_train: Corpus, embeddings, workers: int = 1
) -> LabelMap:
    """Tag the target training set with the source model and majority-vote."""
    predictions = tag_corpus(target_train, embeddings, source_model, workers=workers)
    contingency: dict[str, Counter] = {lab: Counter() for lab in source_model.label_set.labels}
    target_freq: Counter = Counter()
    for paragraph, preds in zip(target_train.paragraphs, predictions):
        for clause, pred in zip(paragraph.clauses, preds):
            if clause.gold_label is None:
                raise ValueError(f"paragraph {paragraph.id!r} has unlabeled clauses")
            contingency[pred][clause.gold_label] += 1
            target_freq[clause.gold_label] += 1
    mapping, degenerate = derive_mapping(
        contingency, target_freq, source_model.label_set.labels, target_train.label_set.none_label
    )
    return LabelMap(mapping, {k: dict(v) for k, v in contingency.items()}, degenerate)


def zero_shot_eval(
    source_model: TaggerModel, label_map: LabelMap, target_test: Corpus, embeddings, workers: int = 1
) -> float:
    """Tag, translate through the map, and micro-F1 against target gold."""
    missing = set(source_model.label_set.labels) - set(label_map.mapping)
    if missing:
        raise ValueError(f"label map not total: missing {sorted(missing)}")
    predictions = tag_corpus(target_test, embeddings, source_model, workers=workers)
    pred_seqs = [label_map.apply(seq) for seq in predictions]
    gold_seqs = [[c.gold_label for c in p.clauses] for p in target_test.paragraphs]
    return micro_f1(pred_seqs, gold_seqs)


def fine_tune(
    pretrained: TaggerModel,
    target: Corpus,
    embeddings,
    config: TaggerConfig,
    history: list | None = None,
) -> TaggerModel:
    """Swap the emission/CRF head for the target label set, then train.

    The optimizer starts fresh; stale moments from pretraining would
    distort the first updates on the new task. Architecture dims must
    match the pretrained model; window sizes and training knobs may vary.
    """
    mismatched = [
        name
        for name in ("d", "p", "h", "d2", "H")
        if getattr(config, name) != getattr(pretrained.config, name)
    ]
    if mismatched:
        raise ValueError(
            f"config fields {mismatched} do not match the pretrained architecture"
        )
    swapped = swap_head(pretrained, target.label_set, seed=config.seed)
    if config.max_epochs == 0:
        return swapped
    return train(target, embeddings, config, init=swapped, history=history)
