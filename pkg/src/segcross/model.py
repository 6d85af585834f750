"""The full segmenter (encoder + fusion head) and its checkpoint."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import csfm, encoder
from .container import ContainerError, pack_arrays, read_container, unpack_arrays, write_container
from .tensor import Tensor, parameter
from .textprep import (
    PreprocessConfig,
    RawDocument,
    SegmentBatch,
    TokenizedDocument,
    Vocabulary,
    pack_segments,
    tokenize_document,
)

CHECKPOINT_FORMAT = "segcross-checkpoint"


class VocabularyMismatchError(ValueError):
    pass


def parameter_names(cfg: encoder.EncoderConfig) -> list[str]:
    return [n for n, _, _ in encoder.parameter_specs(cfg)] + [n for n, _, _ in csfm.csfm_parameter_specs(cfg.d_model)]


class SegmentationModel:
    def __init__(
        self,
        cfg: encoder.EncoderConfig,
        params: dict[str, Tensor],
        csfm_enabled: bool = True,
        activation: str = "relu",
    ):
        self.cfg = cfg
        self.params = params
        self.csfm_enabled = csfm_enabled
        self.activation = activation
        self.head = csfm.CsfmWeights.from_dict(params)

    @classmethod
    def init(cls, cfg: encoder.EncoderConfig, csfm_enabled: bool = True, activation: str = "relu") -> "SegmentationModel":
        rng = np.random.default_rng(cfg.seed)
        params = encoder.init_weights(cfg, rng)
        params.update(csfm.CsfmWeights.init(cfg.d_model, rng).to_dict())
        return cls(cfg, params, csfm_enabled, activation)

    def parameter_names(self) -> list[str]:
        return parameter_names(self.cfg)

    def parameters(self) -> list[Tensor]:
        return [self.params[n] for n in self.parameter_names()]

    def logits(self, batch: SegmentBatch, rng: np.random.Generator | None = None) -> Tensor:
        hidden = encoder.encode(batch, self.params, self.cfg, rng)
        return csfm.document_logits(batch, hidden, self.head, self.csfm_enabled, self.activation)

    def predict(self, batch: SegmentBatch) -> csfm.BoundaryPrediction:
        hidden = encoder.encode(batch, self.params, self.cfg)
        return csfm.forward_document(batch, hidden, self.head, self.csfm_enabled, self.activation)

    def predict_document(self, doc: TokenizedDocument, pre: PreprocessConfig) -> list[int]:
        """Labels for every sentence; segments beyond K are scored window by window."""
        if doc.n == 0:
            return []
        full = pack_segments(doc, pre, cap=False)
        labels: list[int] = []
        for window in full.windows(pre.K):
            labels.extend(self.predict(window).labels)
        return labels


def _round32(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


@dataclass
class Checkpoint:
    """Everything needed to rebuild a trained segmenter.

    Parameters are held at float32 precision (as stored on disk) so a
    save/load round trip is lossless.
    """

    vocab: Vocabulary
    preprocess: PreprocessConfig
    encoder: encoder.EncoderConfig
    params: dict[str, np.ndarray]
    csfm_enabled: bool = True
    activation: str = "relu"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = {k: _round32(v) for k, v in self.params.items()}
        missing = [n for n in parameter_names(self.encoder) if n not in self.params]
        if missing:
            raise ContainerError(f"checkpoint lacks parameters: {missing[:3]}")
        if self.encoder.vocab_size != self.vocab.size:
            raise VocabularyMismatchError("encoder vocab_size differs from the vocabulary")

    @classmethod
    def from_model(cls, model: SegmentationModel, vocab: Vocabulary, pre: PreprocessConfig, meta=None) -> "Checkpoint":
        return cls(
            vocab,
            pre,
            model.cfg,
            {n: model.params[n].data for n in model.parameter_names()},
            model.csfm_enabled,
            model.activation,
            dict(meta or {}),
        )

    def model(self, csfm_enabled: bool | None = None) -> SegmentationModel:
        enabled = self.csfm_enabled if csfm_enabled is None else csfm_enabled
        params = {k: parameter(v) for k, v in self.params.items()}
        return SegmentationModel(self.encoder, params, enabled, self.activation)

    def tokenize(self, doc: RawDocument) -> TokenizedDocument:
        return tokenize_document(doc, self.vocab, self.preprocess.L)

    def check_vocab(self, doc: TokenizedDocument) -> None:
        fp = doc.vocab_fingerprint
        if fp is not None and fp != self.vocab.fingerprint:
            raise VocabularyMismatchError(
                f"document {doc.doc_id!r} was tokenized with vocabulary {fp}, model uses {self.vocab.fingerprint}"
            )
        for s in doc.sentences:
            if any(t >= self.vocab.size for t in s.token_ids):
                raise VocabularyMismatchError(f"document {doc.doc_id!r} has token ids outside the vocabulary")

    def segment_sentences(self, sentences: Sequence[str], pre: PreprocessConfig | None = None) -> list[int]:
        doc = self.tokenize(RawDocument("_", list(sentences), [0] * len(sentences)))
        return self.model().predict_document(doc, pre or self.preprocess)

    def save(self, path: str | Path) -> None:
        save_checkpoint(self, path)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    names = list(ckpt.params)
    manifest = {
        "vocab": ckpt.vocab.tokens,
        "preprocess": asdict(ckpt.preprocess),
        "encoder": ckpt.encoder.to_dict(),
        "csfm": {"enabled": ckpt.csfm_enabled, "activation": ckpt.activation},
        "params": [{"name": n, "shape": list(ckpt.params[n].shape)} for n in names],
        "meta": ckpt.meta,
    }
    write_container(path, CHECKPOINT_FORMAT, manifest, pack_arrays([ckpt.params[n] for n in names]))


def load_checkpoint(path: str | Path) -> Checkpoint:
    manifest, blob = read_container(path, CHECKPOINT_FORMAT)
    try:
        entries = manifest["params"]
        arrays = unpack_arrays(blob, [tuple(e["shape"]) for e in entries])
        return Checkpoint(
            Vocabulary(manifest["vocab"]),
            PreprocessConfig(**manifest["preprocess"]),
            encoder.EncoderConfig(**manifest["encoder"]),
            {e["name"]: a for e, a in zip(entries, arrays)},
            bool(manifest["csfm"]["enabled"]),
            manifest["csfm"]["activation"],
            manifest.get("meta", {}),
        )
    except (KeyError, TypeError) as exc:
        raise ContainerError(f"{path}: malformed checkpoint manifest ({exc})") from exc
