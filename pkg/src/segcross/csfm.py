"""Cross-segment fusion and the boundary classifier.

For a document packed into k segments with encoder states H:

    h_seg_j   = H[j, CLS] - H[j, SEP]
    h_global  = elementwise max over j of h_seg_j
    h_fea     = Linear2(act(Linear1([h_global ; H[SENT]])))
    logits    = Linear_c(h_fea)

``act`` defaults to relu. With fusion disabled, h_global is replaced by
zeros so parameter shapes do not change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .textprep import SegmentBatch

ACTIVATIONS = ("relu", "none")


def csfm_parameter_specs(d: int) -> list[tuple[str, tuple[int, ...], int]]:
    return [
        ("csfm.w1", (2 * d, d), 2 * d),
        ("csfm.b1", (d,), 0),
        ("csfm.w2", (d, d), d),
        ("csfm.b2", (d,), 0),
        ("cls.w", (d, 2), d),
        ("cls.b", (2,), 0),
    ]


@dataclass
class CsfmWeights:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    wc: Tensor
    bc: Tensor

    @property
    def d(self) -> int:
        return self.w2.shape[0]

    @classmethod
    def init(cls, d: int, rng: np.random.Generator) -> "CsfmWeights":
        arrays = []
        for _, shape, fan_in in csfm_parameter_specs(d):
            if fan_in == 0:
                arrays.append(np.zeros(shape))
            else:
                bound = 1.0 / math.sqrt(fan_in)
                arrays.append(rng.uniform(-bound, bound, size=shape))
        return cls(*(T.parameter(a) for a in arrays))

    @classmethod
    def from_dict(cls, params: dict[str, Tensor]) -> "CsfmWeights":
        return cls(*(params[name] for name, _, _ in csfm_parameter_specs(params["csfm.w2"].shape[0])))

    def to_dict(self) -> dict[str, Tensor]:
        names = [name for name, _, _ in csfm_parameter_specs(self.d)]
        return dict(zip(names, (self.w1, self.b1, self.w2, self.b2, self.wc, self.bc)))

    def validate(self) -> None:
        d = self.d
        expected = dict((n, s) for n, s, _ in csfm_parameter_specs(d))
        for name, t in self.to_dict().items():
            if t.shape != expected[name]:
                raise T.ShapeError(f"{name}: expected {expected[name]}, got {t.shape}")


@dataclass
class BoundaryPrediction:
    logits: np.ndarray
    probs: np.ndarray
    labels: list[int]
    sentence_indices: list[int]


def segment_repr(h_cls: Tensor, h_sep: Tensor) -> Tensor:
    if h_cls.shape != h_sep.shape:
        raise T.ShapeError(f"[CLS] state {h_cls.shape} vs [SEP] state {h_sep.shape}")
    return h_cls - h_sep


def global_repr(seg_reprs: Tensor | list[Tensor]) -> Tensor:
    """Elementwise max over a document's segment vectors (``[k, d]`` or list)."""
    if isinstance(seg_reprs, list):
        if not seg_reprs:
            raise ValueError("global_repr of zero segments")
        seg_reprs = T.concat([s.reshape(1, -1) for s in seg_reprs], axis=0)
    if seg_reprs.ndim == 1:
        seg_reprs = seg_reprs.reshape(1, -1)
    values, _ = T.max_over_rows(seg_reprs)
    return values


def fuse(h_global: Tensor, h_sent: Tensor, w: CsfmWeights, activation: str = "relu") -> Tensor:
    """``h_sent`` may be one vector ``[d]`` or a stack ``[n, d]``."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"activation must be one of {ACTIVATIONS}")
    single = h_sent.ndim == 1
    h_sent = h_sent.reshape(1, -1) if single else h_sent
    d = w.d
    if h_global.shape != (d,) or h_sent.shape[1] != d:
        raise T.ShapeError(f"fuse expects width {d}, got global {h_global.shape}, sent {h_sent.shape}")
    g = T.take_rows(h_global.reshape(1, d), np.zeros(h_sent.shape[0], dtype=np.int64))
    h = T.linear(T.concat([g, h_sent], axis=-1), w.w1, w.b1)
    if activation == "relu":
        h = T.relu(h)
    h = T.linear(h, w.w2, w.b2)
    return h.reshape(d) if single else h


def classify_logits(h_fea: Tensor, w: CsfmWeights) -> Tensor:
    return T.linear(h_fea, w.wc, w.bc)


def decide(logits: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Softmax probabilities and hard labels, ties going to class 0."""
    probs = T.softmax_np(np.asarray(logits, dtype=np.float64), axis=-1)
    labels = (logits[..., 1] > logits[..., 0]).astype(int)
    return probs, labels.tolist() if labels.ndim else int(labels)


def classify(h_fea: Tensor, w: CsfmWeights) -> tuple[np.ndarray, np.ndarray, int]:
    logits = classify_logits(h_fea, w).data
    probs, label = decide(logits)
    return logits, probs, label


def gather_states(batch: SegmentBatch, hidden: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Rows of ``hidden`` at every [CLS], [SEP] and (in sentence order) [SENT]."""
    k, t, d = hidden.shape
    if k != batch.k or t != batch.padded_matrix.shape[1]:
        raise ValueError(f"encoder output {hidden.shape} does not match batch {batch.padded_matrix.shape}")
    flat = hidden.reshape(k * t, d)
    cls_rows = [j * t for j in range(k)]
    sep_rows = [j * t + seg.length - 1 for j, seg in enumerate(batch.segments)]
    sent_rows = [j * t + p for j, seg in enumerate(batch.segments) for p in seg.sent_positions]
    return T.take_rows(flat, cls_rows), T.take_rows(flat, sep_rows), T.take_rows(flat, sent_rows)


def document_logits(
    batch: SegmentBatch,
    hidden: Tensor,
    w: CsfmWeights,
    csfm_enabled: bool = True,
    activation: str = "relu",
) -> Tensor:
    """Boundary logits ``[n_scored, 2]`` for every [SENT] of one document batch."""
    h_cls, h_sep, h_sent = gather_states(batch, hidden)
    if csfm_enabled:
        h_global = global_repr(segment_repr(h_cls, h_sep))
    else:
        h_global = Tensor(np.zeros(hidden.shape[-1]))
    return classify_logits(fuse(h_global, h_sent, w, activation), w)


def forward_document(
    batch: SegmentBatch,
    hidden: Tensor,
    w: CsfmWeights,
    csfm_enabled: bool = True,
    activation: str = "relu",
) -> BoundaryPrediction:
    logits = document_logits(batch, hidden, w, csfm_enabled, activation).data
    probs, labels = decide(logits)
    return BoundaryPrediction(logits, probs, labels, batch.sentence_indices)
