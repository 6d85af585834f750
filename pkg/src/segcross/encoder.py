"""Pre-norm transformer encoder standing in for the pretrained backbone."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .textprep import SegmentBatch


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    max_positions: int = 512
    seed: int = 0
    dropout: float = 0.0
    ln_eps: float = 1e-5
    attention_bias: str = "distance"

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.n_layers < 1 or self.d_ff < 1 or self.max_positions < 1:
            raise ValueError("n_layers, d_ff and max_positions must be positive")
        if self.attention_bias not in ("none", "distance"):
            raise ValueError(f"unknown attention_bias {self.attention_bias!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# name -> (shape, fan_in); fan_in None marks a layer-norm gain (ones), 0 a bias (zeros)
def parameter_specs(cfg: EncoderConfig) -> list[tuple[str, tuple[int, ...], int | None]]:
    d, f = cfg.d_model, cfg.d_ff
    specs = [
        ("tok_emb", (cfg.vocab_size, d), d),
        ("pos_emb", (cfg.max_positions, d), d),
    ]
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        specs += [
            (p + "ln1.gain", (d,), None),
            (p + "ln1.bias", (d,), 0),
        ]
        for proj in ("q", "k", "v", "o"):
            specs += [(p + f"attn.w{proj}", (d, d), d), (p + f"attn.b{proj}", (d,), 0)]
        specs += [
            (p + "ln2.gain", (d,), None),
            (p + "ln2.bias", (d,), 0),
            (p + "ff.w1", (d, f), d),
            (p + "ff.b1", (f,), 0),
            (p + "ff.w2", (f, d), f),
            (p + "ff.b2", (d,), 0),
        ]
    specs += [("ln_f.gain", (d,), None), ("ln_f.bias", (d,), 0)]
    return specs


def init_weights(cfg: EncoderConfig, rng: np.random.Generator | None = None) -> dict[str, Tensor]:
    """Uniform(+-1/sqrt(fan_in)) matrices, zero biases, unit layer-norm gains."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    weights = {}
    for name, shape, fan_in in parameter_specs(cfg):
        if fan_in is None:
            data = np.ones(shape)
        elif fan_in == 0:
            data = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        weights[name] = T.parameter(data)
    return weights


def distance_bias(t: int, n_heads: int) -> np.ndarray:
    """Per-head additive attention penalty ``-|i - j| / 2**h``, shape ``[H, t, t]``.

    Head 0 looks mostly at immediate neighbours, later heads progressively
    wider. Without it the learned position table has to discover locality
    from data, which a few hundred documents do not teach.
    """
    pos = np.arange(t)
    dist = np.abs(pos[None, :] - pos[:, None])
    slopes = 0.5 ** np.arange(n_heads)
    return -slopes[:, None, None] * dist[None]


def _attention(x: Tensor, w: dict[str, Tensor], prefix: str, mask_bias: np.ndarray, n_heads: int) -> Tensor:
    k, t, d = x.shape
    dh = d // n_heads

    def heads(name):
        y = T.linear(x, w[prefix + "w" + name], w[prefix + "b" + name])
        return T.permute(y.reshape(k, t, n_heads, dh), (0, 2, 1, 3))

    q, kk, v = heads("q"), heads("k"), heads("v")
    scores = T.matmul(q, T.transpose(kk)) * (1.0 / math.sqrt(dh)) + mask_bias
    ctx = T.matmul(T.softmax(scores, axis=-1), v)
    ctx = T.permute(ctx, (0, 2, 1, 3)).reshape(k, t, d)
    return T.linear(ctx, w[prefix + "wo"], w[prefix + "bo"])


def encode(
    batch: SegmentBatch,
    weights: dict[str, Tensor],
    cfg: EncoderConfig,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Hidden states ``[k, T_max, d_model]`` for every position of every segment.

    PAD keys get a -inf attention logit, so states at real positions do not
    depend on how much padding follows them. Dropout is only applied when
    ``rng`` is given and ``cfg.dropout > 0``.
    """
    ids = np.asarray(batch.padded_matrix)
    if ids.ndim != 2 or ids.shape[0] == 0:
        raise ValueError(f"batch {batch.doc_id!r} has no segments")
    k, t = ids.shape
    if t > cfg.max_positions:
        raise ValueError(f"segment width {t} exceeds max_positions={cfg.max_positions}")
    if ids.max() >= cfg.vocab_size or ids.min() < 0:
        raise ValueError(f"token id out of range for vocab_size={cfg.vocab_size}")

    mask = np.asarray(batch.attention_mask, dtype=bool)
    mask_bias = np.where(mask, 0.0, -np.inf)[:, None, None, :]
    if cfg.attention_bias == "distance":
        mask_bias = mask_bias + distance_bias(t, cfg.n_heads)[None]

    x = T.embedding(weights["tok_emb"], ids) + T.take_rows(weights["pos_emb"], np.arange(t))
    x = T.dropout(x, cfg.dropout, rng)
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        h = T.layer_norm(x, weights[p + "ln1.gain"], weights[p + "ln1.bias"], cfg.ln_eps)
        x = x + T.dropout(_attention(h, weights, p + "attn.", mask_bias, cfg.n_heads), cfg.dropout, rng)
        h = T.layer_norm(x, weights[p + "ln2.gain"], weights[p + "ln2.bias"], cfg.ln_eps)
        h = T.linear(T.relu(T.linear(h, weights[p + "ff.w1"], weights[p + "ff.b1"])), weights[p + "ff.w2"], weights[p + "ff.b2"])
        x = x + T.dropout(h, cfg.dropout, rng)
    return T.layer_norm(x, weights["ln_f.gain"], weights["ln_f.bias"], cfg.ln_eps)
