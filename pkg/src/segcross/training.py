"""Training loop, boundary metrics, synthetic data and the input-length sweep."""

from __future__ import annotations

import csv
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .encoder import EncoderConfig
from .model import Checkpoint, SegmentationModel
from .optim import Adam
from .tensor import backward, cross_entropy
from .textprep import (
    ConfigError,
    PreprocessConfig,
    Sentence,
    TokenizedDocument,
    Vocabulary,
    align_labels,
    pack_segments,
)

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 10
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    encoder: EncoderConfig | None = None
    csfm_enabled: bool = True
    activation: str = "relu"
    pos_weight: float = 1.0
    eval_exclude_final_boundary: bool = True
    min_freq: int = 1

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"lr must be non-negative, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        self.betas = tuple(self.betas)

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        base = self.encoder or EncoderConfig(vocab_size=vocab_size)
        return dataclasses.replace(base, vocab_size=vocab_size, seed=self.seed)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        if "preprocess" in raw:
            raw["preprocess"] = PreprocessConfig(**raw["preprocess"])
        if "encoder" in raw and raw["encoder"] is not None:
            enc = dict(raw["encoder"])
            enc.setdefault("vocab_size", 1)
            raw["encoder"] = EncoderConfig(**enc)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["betas"] = list(self.betas)
        return out


@dataclass(frozen=True)
class Metrics:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "Metrics") -> "Metrics":
        return Metrics(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def summary(self) -> str:
        return f"precision={self.precision:.6f}, recall={self.recall:.6f}, f1={self.f1:.6f}"


def boundary_counts(gold: Sequence[int], pred: Sequence[int], exclude_final: bool = True) -> Metrics:
    if len(gold) != len(pred):
        raise ValueError(f"{len(pred)} predictions for {len(gold)} gold labels")
    n = len(gold) - 1 if exclude_final and gold else len(gold)
    g = np.asarray(gold[:n], dtype=bool)
    p = np.asarray(pred[:n], dtype=bool)
    return Metrics(int((g & p).sum()), int((~g & p).sum()), int((g & ~p).sum()))


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    losses: list[float]
    skipped: int = 0

    def write_loss_log(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "mean_loss"])
            for epoch, loss in enumerate(self.losses):
                w.writerow([epoch, repr(float(loss))])


def _doc_loss(model: SegmentationModel, doc: TokenizedDocument, pre: PreprocessConfig, pos_weight: float, rng=None):
    batch = pack_segments(doc, pre)
    labels = [y for seg in align_labels(batch, doc) for y in seg]
    if not labels:
        return None
    weights = None if pos_weight == 1.0 else [pos_weight if y else 1.0 for y in labels]
    return cross_entropy(model.logits(batch, rng), labels, weights)


def mean_loss(model: SegmentationModel, data: Sequence[TokenizedDocument], cfg: TrainConfig) -> float:
    losses = [_doc_loss(model, d, cfg.preprocess, cfg.pos_weight) for d in data]
    values = [l.item() for l in losses if l is not None]
    return float(np.mean(values)) if values else float("nan")


def train(data: Sequence[TokenizedDocument], cfg: TrainConfig, vocab: Vocabulary) -> TrainResult:
    """Per-document Adam training with a seeded shuffle each epoch.

    ``losses[0]`` is the mean loss of the freshly initialised model and
    ``losses[e]`` the running mean over epoch ``e``.
    """
    if not data:
        raise ValueError("no training documents")
    for doc in data:
        if doc.vocab_fingerprint not in (None, vocab.fingerprint):
            raise ValueError(f"document {doc.doc_id!r} was tokenized with a different vocabulary")
    enc_cfg = cfg.encoder_config(vocab.size)
    if enc_cfg.max_positions < cfg.preprocess.M:
        raise ConfigError(f"max_positions={enc_cfg.max_positions} < M={cfg.preprocess.M}")
    model = SegmentationModel.init(enc_cfg, cfg.csfm_enabled, cfg.activation)
    params = model.parameters()
    opt = Adam(params, cfg.lr, cfg.betas, cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    drop_rng = rng if enc_cfg.dropout > 0 else None

    losses = [mean_loss(model, data, cfg)]
    skipped = 0
    for epoch in range(1, cfg.epochs + 1):
        total, count = 0.0, 0
        for i in rng.permutation(len(data)):
            loss = _doc_loss(model, data[i], cfg.preprocess, cfg.pos_weight, drop_rng)
            if loss is None:
                skipped += 1
                continue
            opt.zero_grad()
            backward(loss, params=params)
            opt.step()
            total += loss.item()
            count += 1
        losses.append(total / count if count else float("nan"))
        logger.info("epoch %d: mean loss %.6f", epoch, losses[-1])
    if skipped:
        logger.warning("skipped %d document passes with no scored sentences", skipped)
    meta = {"train": cfg.to_dict(), "losses": losses}
    return TrainResult(Checkpoint.from_model(model, vocab, cfg.preprocess, meta), losses, skipped)


# ---------------------------------------------------------------------------
# evaluation


def predict_labels(
    data: Sequence[TokenizedDocument],
    ckpt: Checkpoint,
    pre: PreprocessConfig | None = None,
    csfm_enabled: bool | None = None,
    jobs: int = 1,
) -> list[list[int]]:
    pre = pre or ckpt.preprocess
    for doc in data:
        ckpt.check_vocab(doc)
    model = ckpt.model(csfm_enabled)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(lambda d: model.predict_document(d, pre), data))
    return [model.predict_document(d, pre) for d in data]


def evaluate(
    data: Sequence[TokenizedDocument],
    ckpt: Checkpoint,
    include_final_boundary: bool = False,
    pre: PreprocessConfig | None = None,
    csfm_enabled: bool | None = None,
    jobs: int = 1,
) -> Metrics:
    """Boundary precision/recall/F1 over all scored sentences.

    Each document's last sentence always closes a paragraph, so it is left
    out of the counts unless ``include_final_boundary`` is set.
    """
    preds = predict_labels(data, ckpt, pre, csfm_enabled, jobs)
    total = Metrics()
    for doc, pred in zip(data, preds):
        total = total + boundary_counts(doc.labels, pred, not include_final_boundary)
    return total


# ---------------------------------------------------------------------------
# synthetic corpus


def synth_vocab(n_topics: int, vocab_per_topic: int) -> Vocabulary:
    return Vocabulary([f"t{t}w{j:03d}" for t in range(n_topics) for j in range(vocab_per_topic)])


def synth_corpus(
    n_docs: int,
    n_topics: int = 2,
    sents_per_topic_range: tuple[int, int] = (3, 6),
    vocab_per_topic: int = 40,
    seed: int = 0,
    words_per_sentence: tuple[int, int] = (4, 8),
    L: int = 32,
) -> list[TokenizedDocument]:
    """Documents made of one block per topic, topics in random order.

    Topic ``t`` draws words only from its own pool ``t{t}w000...``, so no
    token is shared between topics. The last sentence of each block is a
    boundary.
    """
    if n_topics < 2:
        raise ValueError("need at least two topics")
    lo, hi = sents_per_topic_range
    wlo, whi = words_per_sentence
    if not (1 <= lo <= hi and 1 <= wlo <= whi):
        raise ValueError("invalid sentence or word ranges")
    vocab = synth_vocab(n_topics, vocab_per_topic)
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(n_docs):
        sentences, labels = [], []
        for topic in rng.permutation(n_topics):
            n_sent = int(rng.integers(lo, hi + 1))
            for s in range(n_sent):
                n_words = int(rng.integers(wlo, whi + 1))
                words = rng.integers(0, vocab_per_topic, size=n_words)
                text = " ".join(f"t{topic}w{w:03d}" for w in words)
                ids = [vocab.lookup(f"t{topic}w{w:03d}") for w in words][:L]
                sentences.append(Sentence(text, ids, len(sentences)))
                labels.append(1 if s == n_sent - 1 else 0)
        docs.append(TokenizedDocument(f"synth-{seed}-{i:05d}", sentences, labels, vocab.fingerprint))
    return docs


# ---------------------------------------------------------------------------
# input-length sweep


@dataclass
class SweepRow:
    M: int
    metrics: Metrics | None
    note: str = ""


def sweep_input_length(
    data: Sequence[TokenizedDocument],
    ckpt: Checkpoint | None,
    M_values: Iterable[int],
    mode: str = "evaluate",
    train_data: Sequence[TokenizedDocument] | None = None,
    cfg: TrainConfig | None = None,
    vocab: Vocabulary | None = None,
    include_final_boundary: bool = False,
) -> list[SweepRow]:
    """Boundary metrics as a function of the segment length ``M``.

    ``mode="evaluate"`` re-packs ``data`` at each M and scores it with the
    given checkpoint; ``mode="retrain"`` trains a fresh model per M on
    ``train_data`` first. Values that fail validation are kept as rows with
    a note and no metrics.
    """
    if mode not in ("evaluate", "retrain"):
        raise ValueError(f"unknown sweep mode {mode!r}")
    if mode == "evaluate" and ckpt is None:
        raise ValueError("evaluate mode needs a checkpoint")
    if mode == "retrain" and (train_data is None or cfg is None or vocab is None):
        raise ValueError("retrain mode needs train_data, cfg and vocab")
    base = ckpt.preprocess if mode == "evaluate" else cfg.preprocess
    rows = []
    for M in M_values:
        try:
            pre = base.replace(M=int(M))
        except ConfigError as exc:
            rows.append(SweepRow(int(M), None, f"skipped: {exc}"))
            continue
        if mode == "evaluate":
            if M > ckpt.encoder.max_positions:
                rows.append(SweepRow(M, None, f"skipped: M exceeds max_positions={ckpt.encoder.max_positions}"))
                continue
            metrics = evaluate(data, ckpt, include_final_boundary, pre=pre)
        else:
            run_cfg = dataclasses.replace(cfg, preprocess=pre)
            enc = run_cfg.encoder_config(vocab.size)
            if enc.max_positions < M:
                run_cfg = dataclasses.replace(run_cfg, encoder=dataclasses.replace(enc, max_positions=M))
            model = train(train_data, run_cfg, vocab).checkpoint
            metrics = evaluate(data, model, include_final_boundary)
        rows.append(SweepRow(int(M), metrics))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path_or_file) -> None:
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["M", "precision", "recall", "f1", "tp", "fp", "fn", "note"])
        for r in rows:
            if r.metrics is None:
                w.writerow([r.M, "", "", "", "", "", "", r.note])
            else:
                m = r.metrics
                w.writerow([r.M, f"{m.precision:.6f}", f"{m.recall:.6f}", f"{m.f1:.6f}", m.tp, m.fp, m.fn, r.note])
    finally:
        if own:
            fh.close()
