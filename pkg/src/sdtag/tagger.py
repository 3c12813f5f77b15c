"""Sentence-level BiLSTM-CRF tagger over attention-pooled clause vectors.

The pipeline per paragraph: token embeddings -> projection + LSTM attention
pooling (encoder module) -> dense tanh layer -> BiLSTM over clauses -> CRF
emissions, with a linear-chain CRF providing the training loss and Viterbi
decoding. Checkpoints are a versioned binary container, bit-exact on
round-trip.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import numeric as nm
from .corpus import Corpus, LabelSet, Paragraph, decode_bio, encode_bio
from .embeddings import EmbeddingStore, embed_paragraph
from .encoder import EncoderParams, LstmParams, init_encoder, init_lstm, run_lstm, _uniform
from .numeric import Tape, Tensor

__all__ = [
    "TaggerConfig",
    "TaggerModel",
    "init_model",
    "crf_log_partition",
    "crf_gold_score",
    "crf_nll",
    "viterbi",
    "forward",
    "train",
    "tag",
    "tag_corpus",
    "swap_head",
    "save_model",
    "load_model",
    "Adam",
    "EarlyStopper",
]


@dataclass(frozen=True)
class TaggerConfig:
    """Hyper-parameters; defaults are the tuned full-scale values."""

    c: int = 40  # max clauses per window
    w: int = 60  # max tokens per clause
    d: int = 768  # token embedding dim
    p: int = 200  # projection dim
    h: int = 75  # attention LSTM hidden size
    d2: int = 300  # dense layer width
    H: int = 350  # BiLSTM hidden size per direction
    lr: float = 1e-3
    dropout_embedding: float = 0.4
    dropout_dense: float = 0.4
    dropout_attention: float = 0.6
    dropout_lstm: float = 0.5
    batch_size: int = 10
    max_epochs: int = 20
    patience: int = 2
    validation_ratio: float = 0.1
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TaggerConfig":
        return cls(**d)


@dataclass
class TaggerModel:
    encoder: EncoderParams
    dense_W: Tensor  # (d, d2)
    dense_b: Tensor  # (1, d2)
    lstm_fwd: LstmParams  # input d2, hidden H
    lstm_bwd: LstmParams
    emit_W: Tensor  # (2H, K)
    emit_b: Tensor  # (1, K)
    trans: Tensor  # (K, K)
    start: Tensor  # (K,)
    end: Tensor  # (K,)
    label_set: LabelSet
    config: TaggerConfig

    @property
    def n_tags(self) -> int:
        return self.emit_W.shape[1]

    def parameters(self) -> list[tuple[str, Tensor]]:
        e = self.encoder
        return [
            ("encoder.P", e.P),
            ("encoder.attn.W", e.attn.W),
            ("encoder.attn.U", e.attn.U),
            ("encoder.attn.b", e.attn.b),
            ("encoder.s", e.s),
            ("dense.W", self.dense_W),
            ("dense.b", self.dense_b),
            ("bilstm.fwd.W", self.lstm_fwd.W),
            ("bilstm.fwd.U", self.lstm_fwd.U),
            ("bilstm.fwd.b", self.lstm_fwd.b),
            ("bilstm.bwd.W", self.lstm_bwd.W),
            ("bilstm.bwd.U", self.lstm_bwd.U),
            ("bilstm.bwd.b", self.lstm_bwd.b),
            ("emit.W", self.emit_W),
            ("emit.b", self.emit_b),
            ("crf.trans", self.trans),
            ("crf.start", self.start),
            ("crf.end", self.end),
        ]

    def param_tensors(self) -> list[Tensor]:
        return [t for _, t in self.parameters()]

    def copy(self) -> "TaggerModel":
        def ct(t: Tensor) -> Tensor:
            return Tensor(t.data.copy())

        def cl(l: LstmParams) -> LstmParams:
            return LstmParams(ct(l.W), ct(l.U), ct(l.b))

        return TaggerModel(
            encoder=EncoderParams(ct(self.encoder.P), cl(self.encoder.attn), ct(self.encoder.s)),
            dense_W=ct(self.dense_W),
            dense_b=ct(self.dense_b),
            lstm_fwd=cl(self.lstm_fwd),
            lstm_bwd=cl(self.lstm_bwd),
            emit_W=ct(self.emit_W),
            emit_b=ct(self.emit_b),
            trans=ct(self.trans),
            start=ct(self.start),
            end=ct(self.end),
            label_set=self.label_set,
            config=self.config,
        )


def init_model(
    label_set: LabelSet, config: TaggerConfig, rng: np.random.Generator | None = None
) -> TaggerModel:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    enc = init_encoder(rng, config.d, config.p, config.h)
    dense_W = Tensor(_uniform(rng, (config.d, config.d2)))
    dense_b = Tensor(_uniform(rng, (1, config.d2)))
    fwd = init_lstm(rng, config.d2, config.H)
    bwd = init_lstm(rng, config.d2, config.H)
    K = label_set.bio_size
    return TaggerModel(
        encoder=enc,
        dense_W=dense_W,
        dense_b=dense_b,
        lstm_fwd=fwd,
        lstm_bwd=bwd,
        emit_W=Tensor(_uniform(rng, (2 * config.H, K))),
        emit_b=Tensor(_uniform(rng, (1, K))),
        trans=Tensor(_uniform(rng, (K, K))),
        start=Tensor(_uniform(rng, (K,))),
        end=Tensor(_uniform(rng, (K,))),
        label_set=label_set,
        config=config,
    )


def swap_head(model: TaggerModel, new_label_set: LabelSet, seed: int) -> TaggerModel:
    """Keep encoder/dense/BiLSTM weights, re-initialize emissions and CRF."""
    out = model.copy()
    rng = np.random.default_rng(seed)
    K = new_label_set.bio_size
    out.emit_W = Tensor(_uniform(rng, (2 * model.config.H, K)))
    out.emit_b = Tensor(_uniform(rng, (1, K)))
    out.trans = Tensor(_uniform(rng, (K, K)))
    out.start = Tensor(_uniform(rng, (K,)))
    out.end = Tensor(_uniform(rng, (K,)))
    out.label_set = new_label_set
    return out


# ---------------------------------------------------------------------------
# linear-chain CRF


def _as_data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _masked_length(n: int, mask) -> int:
    if mask is None:
        return n
    mask = np.asarray(mask, dtype=bool)
    m = int(mask.sum())
    if mask[:m].sum() != m:
        raise ValueError("mask must be a left-aligned prefix")
    return m


def crf_log_partition(emissions, transitions, start=None, end=None, mask=None):
    """log sum over all tag paths of exp(path score), by the forward recursion."""
    em = nm.astensor(emissions)
    n, K = em.shape
    n = _masked_length(n, mask)
    if n < 1:
        raise ValueError("need at least one unmasked step")
    trans = nm.astensor(transitions)
    start = Tensor(np.zeros(K)) if start is None else nm.astensor(start)
    end = Tensor(np.zeros(K)) if end is None else nm.astensor(end)
    alpha = nm.add(start, em[0])
    for t in range(1, n):
        broadcast = nm.add(nm.reshape(alpha, (K, 1)), trans)
        alpha = nm.add(nm.logsumexp(broadcast, axis=0), em[t])
    return nm.logsumexp(nm.add(alpha, end))


def crf_gold_score(emissions, transitions, gold, start=None, end=None, mask=None):
    em = nm.astensor(emissions)
    n, K = em.shape
    n = _masked_length(n, mask)
    gold = np.asarray(gold, dtype=np.intp)
    if gold.shape != (n,):
        raise ValueError(f"gold length {gold.shape} != unmasked steps {n}")
    if gold.size and (gold.min() < 0 or gold.max() >= K):
        raise ValueError("gold tag index out of range")
    trans = nm.astensor(transitions)
    start = Tensor(np.zeros(K)) if start is None else nm.astensor(start)
    end = Tensor(np.zeros(K)) if end is None else nm.astensor(end)
    score = nm.add(nm.reduce_sum(nm.gather(em, np.arange(n), gold)), start[int(gold[0])])
    score = nm.add(score, end[int(gold[-1])])
    if n > 1:
        score = nm.add(score, nm.reduce_sum(nm.gather(trans, gold[:-1], gold[1:])))
    return score


def crf_nll(emissions, transitions, gold, start=None, end=None, mask=None):
    """Negative log-likelihood of the gold path; nonnegative up to rounding."""
    lp = crf_log_partition(emissions, transitions, start=start, end=end, mask=mask)
    gs = crf_gold_score(emissions, transitions, gold, start=start, end=end, mask=mask)
    return nm.add(lp, nm.mul(gs, -1.0))


def viterbi(emissions, transitions, start=None, end=None, mask=None) -> list[int]:
    """Argmax-score tag path; ties go to the lowest tag index at each step."""
    em = _as_data(emissions)
    n, K = em.shape
    n = _masked_length(n, mask)
    if n < 1:
        raise ValueError("need at least one unmasked step")
    trans = _as_data(transitions)
    start_v = np.zeros(K) if start is None else _as_data(start)
    end_v = np.zeros(K) if end is None else _as_data(end)
    delta = start_v + em[0]
    backptr = np.zeros((n, K), dtype=np.intp)
    for t in range(1, n):
        scores = delta[:, None] + trans  # (from, to)
        backptr[t] = np.argmax(scores, axis=0)
        delta = scores[backptr[t], np.arange(K)] + em[t]
    last = int(np.argmax(delta + end_v))
    path = [last]
    for t in range(n - 1, 0, -1):
        last = int(backptr[t, last])
        path.append(last)
    path.reverse()
    return path


# ---------------------------------------------------------------------------
# model forward pass


def _dropout(rng: np.random.Generator, shape, rate: float) -> Tensor:
    keep = rng.random(shape) >= rate
    return Tensor(keep / (1.0 - rate))


def forward(ep, model: TaggerModel, training: bool = False, rng=None) -> Tensor:
    """Emission scores, one row per clause slot; padding rows are zero."""
    cfg = model.config
    if ep.d != model.encoder.d:
        raise ValueError(f"embedding dim {ep.d} != model dim {model.encoder.d}")
    if training and rng is None:
        raise ValueError("training-mode forward needs an rng for dropout")
    n = ep.n_clauses
    if n == 0:
        raise ValueError("empty paragraph block")
    counts = ep.token_counts

    summ_rows = []
    for i in range(n):
        u = int(counts[i])
        X = Tensor(ep.D[i, :u, :])
        if training and cfg.dropout_embedding > 0:
            X = nm.mul(X, _dropout(rng, X.shape, cfg.dropout_embedding))
        proj = nm.tanh(nm.matmul(X, model.encoder.P))
        if training and cfg.dropout_lstm > 0:
            proj = nm.mul(proj, _dropout(rng, (1, cfg.p), cfg.dropout_lstm))
        hseq = run_lstm(model.encoder.attn, proj)
        a = nm.softmax(nm.reshape(nm.matmul(hseq, model.encoder.s), (u,)))
        if training and cfg.dropout_attention > 0:
            a = nm.mul(a, _dropout(rng, (u,), cfg.dropout_attention))
        summ_rows.append(nm.matmul(nm.reshape(a, (1, u)), X))
    dsum = nm.concat(summ_rows, axis=0)  # (n, d)

    dense = nm.tanh(nm.add(nm.matmul(dsum, model.dense_W), model.dense_b))
    if training and cfg.dropout_dense > 0:
        dense = nm.mul(dense, _dropout(rng, dense.shape, cfg.dropout_dense))
    xs = dense
    if training and cfg.dropout_lstm > 0:
        xs = nm.mul(xs, _dropout(rng, (1, cfg.d2), cfg.dropout_lstm))
    hf = run_lstm(model.lstm_fwd, xs)
    hb = run_lstm(model.lstm_bwd, xs, reverse=True)
    hcat = nm.concat([hf, hb], axis=1)  # (n, 2H)
    em = nm.add(nm.matmul(hcat, model.emit_W), model.emit_b)
    if n < ep.c:
        em = nm.concat([em, Tensor(np.zeros((ep.c - n, model.n_tags)))], axis=0)
    return em


# ---------------------------------------------------------------------------
# training


class Adam:
    """Adaptive-moment optimizer updating param tensors in place."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, (p, g) in enumerate(zip(self.params, grads)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * (g * g)
            mhat = self.m[i] / (1 - b1**self.t)
            vhat = self.v[i] / (1 - b2**self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class EarlyStopper:
    """Stop after `patience` updates without improvement; remembers the best."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_index = 0
        self.count = 0
        self.bad = 0

    def update(self, value: float) -> bool:
        self.count += 1
        if value < self.best:
            self.best = value
            self.best_index = self.count
            self.bad = 0
            return False
        self.bad += 1
        return self.bad >= self.patience


def _instances(corpus: Corpus, store: EmbeddingStore, config: TaggerConfig):
    """Window every paragraph to <= c clauses; gold BIO encoded before windowing."""
    tag_index = {t: i for i, t in enumerate(corpus.label_set.bio_tags())}
    out = []
    for par_idx, paragraph in enumerate(corpus.paragraphs):
        labels = paragraph.gold_labels
        if any(lab is None for lab in labels):
            raise ValueError(f"paragraph {paragraph.id!r} has unlabeled clauses")
        bio = encode_bio(labels, corpus.label_set)
        for s in range(0, len(paragraph), config.c):
            ep = embed_paragraph(store, paragraph, config.c, config.w, start=s)
            gold = np.array([tag_index[t] for t in bio[s : s + config.c]], dtype=np.intp)
            out.append((par_idx, ep, gold))
    return out


def _window_loss(model: TaggerModel, ep, gold, training: bool = False, rng=None) -> Tensor:
    em = forward(ep, model, training=training, rng=rng)
    n = ep.n_clauses
    nll = crf_nll(em[0:n], model.trans, gold, start=model.start, end=model.end)
    return nm.mul(nll, 1.0 / n)


def _mean_eval_loss(model: TaggerModel, instances) -> float:
    total = 0.0
    for _, ep, gold in instances:
        total += _window_loss(model, ep, gold).item()
    return total / len(instances)


def train(
    corpus: Corpus,
    embeddings: EmbeddingStore,
    config: TaggerConfig,
    init: TaggerModel | None = None,
    history: list | None = None,
) -> TaggerModel:
    """Minimize mean per-clause CRF NLL with Adam; returns the best-validation model.

    Deterministic for a fixed (corpus, embeddings, config): one rng seeded
    from config.seed drives init, the validation split, epoch shuffles and
    dropout. `history`, when given, collects per-epoch loss records.
    """
    if not corpus.paragraphs:
        raise ValueError("empty corpus")
    if init is not None and init.label_set != corpus.label_set:
        raise ValueError(
            f"initial model labels {init.label_set.name!r} != corpus labels {corpus.label_set.name!r}"
        )
    rng = np.random.default_rng(config.seed)
    # split before init so fine-tuned and from-scratch runs under the same
    # seed hold out the same paragraphs
    n_par = len(corpus.paragraphs)
    n_val = int(round(config.validation_ratio * n_par)) if config.validation_ratio > 0 else 0
    n_val = min(n_val, n_par - 1)
    perm = rng.permutation(n_par)
    val_pars = set(perm[:n_val].tolist())

    model = init.copy() if init is not None else init_model(corpus.label_set, config, rng=rng)
    instances = _instances(corpus, embeddings, config)
    train_insts = [inst for inst in instances if inst[0] not in val_pars]
    val_insts = [inst for inst in instances if inst[0] in val_pars]
    if not train_insts:
        raise ValueError("no training paragraphs after validation split")

    params = model.param_tensors()
    adam = Adam(params, lr=config.lr)
    stopper = EarlyStopper(config.patience)
    best = [p.data.copy() for p in params]

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_insts))
        batch_losses = []
        for ofs in range(0, len(order), config.batch_size):
            batch = order[ofs : ofs + config.batch_size]
            with Tape() as tape:
                total = None
                for idx in batch:
                    _, ep, gold = train_insts[idx]
                    loss_i = _window_loss(model, ep, gold, training=True, rng=rng)
                    total = loss_i if total is None else nm.add(total, loss_i)
                loss = nm.mul(total, 1.0 / len(batch))
            grads = tape.gradient(loss, params)
            adam.step(grads)
            batch_losses.append(loss.item())
        train_loss = float(np.mean(batch_losses))
        val_loss = _mean_eval_loss(model, val_insts) if val_insts else train_loss
        improved = val_loss < stopper.best
        if improved:
            best = [p.data.copy() for p in params]
        if history is not None:
            history.append(
                {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "improved": improved}
            )
        if stopper.update(val_loss):
            break

    for p, data in zip(params, best):
        p.data = data
    return model


# ---------------------------------------------------------------------------
# inference


def tag(paragraph: Paragraph, embeddings: EmbeddingStore, model: TaggerModel) -> list[str]:
    """Label every clause; long paragraphs run as consecutive windows."""
    cfg = model.config
    bio_tags = model.label_set.bio_tags()
    tags: list[str] = []
    for s in range(0, len(paragraph), cfg.c):
        ep = embed_paragraph(embeddings, paragraph, cfg.c, cfg.w, start=s)
        em = forward(ep, model)
        n = ep.n_clauses
        path = viterbi(em.data[:n], model.trans, start=model.start, end=model.end)
        tags.extend(bio_tags[i] for i in path)
    return decode_bio(tags, model.label_set)


def tag_corpus(
    corpus: Corpus, embeddings: EmbeddingStore, model: TaggerModel, workers: int = 1
) -> list[list[str]]:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda p: tag(p, embeddings, model), corpus.paragraphs))
    return [tag(p, embeddings, model) for p in corpus.paragraphs]


# ---------------------------------------------------------------------------
# checkpoints

CKPT_MAGIC = b"SDTM"
CKPT_VERSION = 1


def save_model(model: TaggerModel, path) -> None:
    named = model.parameters()
    header = {
        "config": model.config.to_dict(),
        "label_set": {
            "name": model.label_set.name,
            "labels": list(model.label_set.labels),
            "none_label": model.label_set.none_label,
        },
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in named],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        fh.write(blob)
        for _, t in named:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_model(path) -> TaggerModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: not a tagger checkpoint (magic {magic!r})")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        tensors = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            tensors[spec["name"]] = Tensor(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
    ls = header["label_set"]
    label_set = LabelSet(ls["name"], tuple(ls["labels"]), ls["none_label"])
    config = TaggerConfig.from_dict(header["config"])
    encoder = EncoderParams(
        tensors["encoder.P"],
        LstmParams(tensors["encoder.attn.W"], tensors["encoder.attn.U"], tensors["encoder.attn.b"]),
        tensors["encoder.s"],
    )
    return TaggerModel(
        encoder=encoder,
        dense_W=tensors["dense.W"],
        dense_b=tensors["dense.b"],
        lstm_fwd=LstmParams(tensors["bilstm.fwd.W"], tensors["bilstm.fwd.U"], tensors["bilstm.fwd.b"]),
        lstm_bwd=LstmParams(tensors["bilstm.bwd.W"], tensors["bilstm.bwd.U"], tensors["bilstm.bwd.b"]),
        emit_W=tensors["emit.W"],
        emit_b=tensors["emit.b"],
        trans=tensors["crf.trans"],
        start=tensors["crf.start"],
        end=tensors["crf.end"],
        label_set=label_set,
        config=config,
    )
