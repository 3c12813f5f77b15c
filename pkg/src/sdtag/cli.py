"""Batch command surface: convert/split corpora, train, eval, fragments,
zero-shot transfer, and attention reports.

Every command writes a run manifest (inputs hashed, seed, config, outputs,
wall time) so a run can be reproduced exactly. Exit codes: 0 success,
2 I/O failure, 3 validation failure, 4 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    CLAIM_LABELS,
    Corpus,
    Paragraph,
    ParseError,
    parse_coda,
    parse_rct,
    parse_scidt,
    read_jsonl,
    write_jsonl,
)
from .embeddings import embed_paragraph, read_store
from .encoder import attention_report, render_attention_html, render_attention_tsv
from .featcrf import FeatCrfModel, decode_featcrf, extract_features, train_featcrf
from .fragments import decode_blocks, encode_blocks, extract_mentions, fragment_f1, fragment_set_f1
from .metrics import confusion, binary_f1, mcnemar, micro_f1
from .tagger import TaggerConfig, load_model, save_model, tag_corpus, train
from .transfer import fine_tune, learn_label_map, zero_shot_eval

EXIT_OK = 0
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_INTERNAL = 4

L2_GRID = (0.01, 0.1, 1.0, 10.0)

EVAL_REPORT_SCHEMA = {
    "type": "object",
    "required": ["task", "model", "corpus", "n_paragraphs", "n_clauses", "micro_f1", "confusion"],
    "properties": {
        "task": {"type": "string", "enum": ["discourse", "claim"]},
        "model": {"type": "string"},
        "corpus": {"type": "string"},
        "n_paragraphs": {"type": "integer", "minimum": 0},
        "n_clauses": {"type": "integer", "minimum": 0},
        "micro_f1": {"type": "number", "minimum": 0, "maximum": 1},
        "binary_f1": {"type": "number", "minimum": 0, "maximum": 1},
        "exclude_none": {"type": "boolean"},
        "confusion": {
            "type": "object",
            "required": ["labels", "counts"],
            "properties": {
                "labels": {"type": "array", "items": {"type": "string"}},
                "counts": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
            },
        },
        "mcnemar": {
            "type": "object",
            "required": ["statistic", "p_value", "compare_model"],
            "properties": {
                "statistic": {"type": "number"},
                "p_value": {"type": "number", "minimum": 0, "maximum": 1},
                "compare_model": {"type": "string"},
                "compare_micro_f1": {"type": "number"},
            },
        },
    },
}


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("SDT_THREADS", "1")))
    except ValueError:
        return 1


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(path, command: str, argv, seed, config, inputs, outputs, t0: float) -> None:
    doc = {
        "tool": f"sdtag {__version__}",
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "wall_time_s": round(time.time() - t0, 3),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config(args) -> TaggerConfig:
    fields = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            fields = json.load(fh)
    if getattr(args, "seed", None) is not None:
        fields["seed"] = args.seed
    return TaggerConfig.from_dict({**TaggerConfig().to_dict(), **fields})


# ---------------------------------------------------------------------------
# commands


def cmd_convert(args, argv) -> int:
    t0 = time.time()
    parser = {"rct": parse_rct, "scidt": parse_scidt, "coda": parse_coda}[args.format]
    corpus = parser(args.input)
    write_jsonl(corpus, args.out)
    _manifest(
        f"{args.out}.manifest.json", "convert", argv, None,
        {"format": args.format}, [args.input], [args.out], t0,
    )
    print(f"wrote {len(corpus.paragraphs)} paragraphs to {args.out}")
    return EXIT_OK


def cmd_split(args, argv) -> int:
    t0 = time.time()
    corpus = read_jsonl(args.corpus)
    n = len(corpus.paragraphs)
    n_test = args.test_count if args.test_count is not None else int(round(args.test_ratio * n))
    if not 0 < n_test < n:
        raise ValueError(f"test size {n_test} must cut {n} paragraphs into two non-empty parts")
    rng = np.random.default_rng(args.seed)
    perm = rng.permutation(n)
    test_ids = set(perm[:n_test].tolist())
    train_pars = tuple(p for i, p in enumerate(corpus.paragraphs) if i not in test_ids)
    test_pars = tuple(p for i, p in enumerate(corpus.paragraphs) if i in test_ids)
    write_jsonl(Corpus(corpus.label_set, train_pars, split="train"), args.train_out)
    write_jsonl(Corpus(corpus.label_set, test_pars, split="test"), args.test_out)
    _manifest(
        f"{args.train_out}.manifest.json", "split", argv, args.seed,
        {"n_test": n_test}, [args.corpus], [args.train_out, args.test_out], t0,
    )
    print(f"split {n} -> {len(train_pars)} train / {len(test_pars)} test")
    return EXIT_OK


def cmd_train(args, argv) -> int:
    t0 = time.time()
    config = _load_config(args)
    label_set = CLAIM_LABELS if args.task == "claim" else None
    corpus = read_jsonl(args.corpus, label_set=label_set)
    store = read_store(args.embeddings)
    history: list = []
    if args.pretrained:
        pretrained = load_model(args.pretrained)
        model = fine_tune(pretrained, corpus, store, config, history=history)
    else:
        model = train(corpus, store, config, history=history)
    save_model(model, args.out)
    loss_log = f"{args.out}.losses.jsonl"
    with open(loss_log, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")
    inputs = [args.corpus, args.embeddings] + ([args.pretrained] if args.pretrained else [])
    _manifest(
        f"{args.out}.manifest.json", "train", argv, config.seed,
        config.to_dict(), inputs, [args.out, loss_log], t0,
    )
    print(f"trained {len(history)} epochs -> {args.out}")
    return EXIT_OK


def _correctness(preds, corpus) -> list[int]:
    flags = []
    for p, seq in zip(corpus.paragraphs, preds):
        for clause, lab in zip(p.clauses, seq):
            flags.append(1 if lab == clause.gold_label else 0)
    return flags


def cmd_eval(args, argv) -> int:
    t0 = time.time()
    model = load_model(args.model)
    corpus = read_jsonl(args.corpus, label_set=model.label_set)
    store = read_store(args.embeddings)
    preds = tag_corpus(corpus, store, model, workers=_workers())
    gold = [[c.gold_label for c in p.clauses] for p in corpus.paragraphs]
    task = "claim" if set(model.label_set.labels) == set(CLAIM_LABELS.labels) else "discourse"
    exclude = model.label_set.none_label if args.exclude_none else None
    report = {
        "task": task,
        "model": str(args.model),
        "corpus": str(args.corpus),
        "n_paragraphs": len(corpus.paragraphs),
        "n_clauses": sum(len(p) for p in corpus.paragraphs),
        "micro_f1": micro_f1(preds, gold, exclude_label=exclude),
        "exclude_none": bool(args.exclude_none),
        "confusion": confusion(preds, gold, model.label_set).to_dict(),
    }
    if task == "claim":
        to01 = lambda seqs: [[1 if lab == "claim" else 0 for lab in s] for s in seqs]
        report["binary_f1"] = binary_f1(to01(preds), to01(gold))
    inputs = [args.model, args.corpus, args.embeddings]
    if args.compare:
        other = load_model(args.compare)
        preds2 = tag_corpus(corpus, store, other, workers=_workers())
        stat, p = mcnemar(_correctness(preds, corpus), _correctness(preds2, corpus),
                          [1] * report["n_clauses"])
        report["mcnemar"] = {
            "statistic": stat,
            "p_value": p,
            "compare_model": str(args.compare),
            "compare_micro_f1": micro_f1(preds2, gold, exclude_label=exclude),
        }
        inputs.append(args.compare)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        _manifest(f"{args.out}.manifest.json", "eval", argv, None, {}, inputs, [args.out], t0)
    print(text)
    return EXIT_OK


def _discourse_tags_for(args, corpus) -> list[list[str] | None]:
    """Per paragraph, the tag sequence to feed the feature extractor."""
    if args.no_tags:
        return [None] * len(corpus.paragraphs)
    if args.discourse_model:
        model = load_model(args.discourse_model)
        if not args.embeddings:
            raise ValueError("--discourse-model needs --embeddings")
        store = read_store(args.embeddings)
        return tag_corpus(corpus, store, model, workers=_workers())
    # default: gold tags from the corpus itself
    tags = []
    for p in corpus.paragraphs:
        if any(c.gold_label is None for c in p.clauses):
            raise ValueError(f"paragraph {p.id!r} lacks gold discourse tags; use --no-tags")
        tags.append([c.gold_label for c in p.clauses])
    return tags


def _mentions_for(paragraph) -> list[frozenset]:
    if paragraph.fragment is not None:
        return list(paragraph.fragment.mentioned)
    return [frozenset(extract_mentions(c.text)) for c in paragraph.clauses]


def _require_fragments(corpus) -> None:
    missing = [p.id for p in corpus.paragraphs if p.fragment is None]
    if missing:
        raise ValueError(f"missing fragment annotations on paragraphs {missing[:5]}")


def _fragment_sequences(corpus, tags):
    out = []
    for p, t in zip(corpus.paragraphs, tags):
        feats = extract_features(p, t, _mentions_for(p))
        gold = encode_blocks(p.fragment.referred)
        out.append((feats, gold))
    return out


def _select_l2(sequences, seed: int) -> float:
    if len(sequences) < 5:
        return 1.0
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(sequences))
    n_val = max(1, len(sequences) // 10)
    val_ids = set(perm[:n_val].tolist())
    train_seqs = [s for i, s in enumerate(sequences) if i not in val_ids]
    val_seqs = [s for i, s in enumerate(sequences) if i in val_ids]
    best_l2, best_acc = 1.0, -1.0
    for l2 in L2_GRID:
        model = train_featcrf(train_seqs, l2=l2)
        right = total = 0
        for feats, gold in val_seqs:
            pred = decode_featcrf(feats, model)
            right += sum(a == b for a, b in zip(pred, gold))
            total += len(gold)
        acc = right / total if total else 0.0
        if acc > best_acc:
            best_acc, best_l2 = acc, l2
    return best_l2


def cmd_fragments(args, argv) -> int:
    t0 = time.time()
    corpus = read_jsonl(args.corpus)
    if args.mode in ("train", "eval") or args.gold_bio:
        _require_fragments(corpus)
    tags = _discourse_tags_for(args, corpus)

    if args.mode == "train":
        sequences = _fragment_sequences(corpus, tags)
        l2 = args.l2 if args.l2 is not None else _select_l2(sequences, args.seed)
        model = train_featcrf(sequences, l2=l2, seed=args.seed)
        model.save(args.out)
        _manifest(
            f"{args.out}.manifest.json", "fragments-train", argv, args.seed,
            {"l2": l2, "tags": _tag_mode(args)}, [args.corpus], [args.out], t0,
        )
        print(f"trained feature CRF (l2={l2}) -> {args.out}")
        return EXIT_OK

    # predict / eval share the decode pipeline
    if args.gold_bio:
        bios = [encode_blocks(p.fragment.referred) for p in corpus.paragraphs]
    else:
        if not args.model:
            raise ValueError("need --model (or --gold-bio in eval mode)")
        model = FeatCrfModel.load(args.model)
        bios = [
            decode_featcrf(extract_features(p, t, _mentions_for(p)), model)
            for p, t in zip(corpus.paragraphs, tags)
        ]
    decoded = [
        decode_blocks(bio, _mentions_for(p)) for bio, p in zip(bios, corpus.paragraphs)
    ]

    if args.mode == "predict":
        with open(args.out, "w", encoding="utf-8") as fh:
            for p, sets in zip(corpus.paragraphs, decoded):
                doc = {
                    "id": p.id,
                    "bio": encode_blocks(sets),
                    "referred": [sorted(c.canonical for c in s) for s in sets],
                }
                fh.write(json.dumps(doc) + "\n")
        _manifest(
            f"{args.out}.manifest.json", "fragments-predict", argv, None,
            {"tags": _tag_mode(args)}, [args.corpus], [args.out], t0,
        )
        print(f"wrote predictions for {len(decoded)} paragraphs -> {args.out}")
        return EXIT_OK

    # eval
    flat_pred = [s for sets in decoded for s in sets]
    flat_gold = [s for p in corpus.paragraphs for s in p.fragment.referred]
    precision, recall, f1 = fragment_f1(flat_pred, flat_gold)
    sp, sr, sf1 = fragment_set_f1(flat_pred, flat_gold)
    gold_bios = [encode_blocks(p.fragment.referred) for p in corpus.paragraphs]
    bio_acc = micro_f1([t for b in bios for t in b], [t for b in gold_bios for t in b])
    report = {
        "mode": "gold-bio" if args.gold_bio else "model",
        "tags": _tag_mode(args),
        "n_paragraphs": len(corpus.paragraphs),
        "n_clauses": len(flat_pred),
        "bio_micro_f1": bio_acc,
        "pair_precision": precision,
        "pair_recall": recall,
        "pair_micro_f1": f1,
        "set_precision": sp,
        "set_recall": sr,
        "set_micro_f1": sf1,
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        _manifest(f"{args.out}.manifest.json", "fragments-eval", argv, None, {}, [args.corpus], [args.out], t0)
    print(text)
    return EXIT_OK


def _tag_mode(args) -> str:
    if args.no_tags:
        return "none"
    if args.discourse_model:
        return "model"
    return "gold"


def cmd_zeroshot(args, argv) -> int:
    t0 = time.time()
    model = load_model(args.model)
    target_train = read_jsonl(args.target_train)
    target_test = read_jsonl(args.target_test, label_set=target_train.label_set)
    store = read_store(args.embeddings)
    label_map = learn_label_map(model, target_train, store, workers=_workers())
    score = zero_shot_eval(model, label_map, target_test, store, workers=_workers())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    map_path = out_dir / "labelmap.json"
    with open(map_path, "w", encoding="utf-8") as fh:
        json.dump(label_map.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    report = {
        "micro_f1": score,
        "degenerate_sources": sorted(label_map.degenerate),
        "mapping": label_map.to_dict()["mapping"],
    }
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _manifest(
        out_dir / "manifest.json", "zeroshot", argv, None, {},
        [args.model, args.target_train, args.target_test, args.embeddings],
        [map_path, report_path], t0,
    )
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_attention(args, argv) -> int:
    t0 = time.time()
    model = load_model(args.model)
    corpus = read_jsonl(args.corpus, label_set=model.label_set)
    store = read_store(args.embeddings)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for p in corpus.paragraphs:
        rows = []
        for s in range(0, len(p), model.config.c):  # long paragraphs window like tag()
            window = Paragraph(p.id, p.clauses[s : s + model.config.c])
            ep = embed_paragraph(store, p, model.config.c, model.config.w, start=s)
            rows.extend((idx + s, tok, w) for idx, tok, w in attention_report(window, ep, model))
        tsv = out_dir / f"{p.id}.tsv"
        html = out_dir / f"{p.id}.html"
        tsv.write_text(render_attention_tsv(rows), encoding="utf-8")
        html.write_text(render_attention_html(p.id, rows), encoding="utf-8")
        outputs.extend([tsv, html])
    _manifest(
        out_dir / "manifest.json", "attention", argv, None, {},
        [args.model, args.corpus, args.embeddings], outputs, t0,
    )
    print(f"wrote attention reports for {len(corpus.paragraphs)} paragraphs -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdtag", description=__doc__)
    ap.add_argument("--version", action="version", version=f"sdtag {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="import a dataset into canonical JSONL")
    p.add_argument("format", choices=("rct", "scidt", "coda"))
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("split", help="random train/test split of a JSONL corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.add_argument("--test-ratio", type=float, default=0.1)
    p.add_argument("--test-count", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train (or fine-tune) a discourse/claim tagger")
    p.add_argument("--task", choices=("discourse", "claim"), default="discourse")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--config", help="JSON file overriding TaggerConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--pretrained", help="checkpoint to fine-tune from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a JSONL corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--exclude-none", action="store_true")
    p.add_argument("--compare", help="second checkpoint for a McNemar test")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fragments", help="evidence fragment detection pipeline")
    p.add_argument("mode", choices=("train", "predict", "eval"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", help="feature-CRF model path (input for predict/eval)")
    p.add_argument("--out", help="output path (model, predictions, or report)")
    p.add_argument("--discourse-model", help="tagger checkpoint supplying discourse tags")
    p.add_argument("--embeddings", help="embedding store for --discourse-model")
    p.add_argument("--gold-tags", action="store_true", help="use gold discourse tags (default)")
    p.add_argument("--no-tags", action="store_true", help="ablation: no discourse tag features")
    p.add_argument("--gold-bio", action="store_true", help="eval: decode from gold BIO tags")
    p.add_argument("--l2", type=float, help="fixed l2 penalty (default: grid-select)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fragments)

    p = sub.add_parser("zeroshot", help="majority-vote label mapping + zero-shot eval")
    p.add_argument("--model", required=True)
    p.add_argument("--target-train", required=True)
    p.add_argument("--target-test", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_zeroshot)

    p = sub.add_parser("attention", help="per-token attention weight reports")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_attention)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args, argv)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ParseError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
