# %% [markdown]
# # Autodiff and gradient checking
#
# `segcross.tensor` is a small reverse-mode autodiff library on top of
# numpy. Every operation records its inputs and a closure for the
# backward pass; `backward` walks the graph once in reverse.

# %%
import numpy as np

from segcross import tensor as T

x = T.parameter([[1.0, -2.0, 3.0]])
w = T.parameter(np.arange(6.0).reshape(3, 2) / 10)
loss = T.cross_entropy(T.linear(x, w), [1])
T.backward(loss)
print("loss", loss.item())
print("dL/dw\n", w.grad)

# %% [markdown]
# The analytic gradient should agree with central finite differences.

# %%
def numeric(f, p, h=1e-6):
    g = np.zeros_like(p.data)
    for i in np.ndindex(p.shape):
        old = p.data[i]
        p.data[i] = old + h
        up = f().item()
        p.data[i] = old - h
        down = f().item()
        p.data[i] = old
        g[i] = (up - down) / (2 * h)
    return g


approx = numeric(lambda: T.cross_entropy(T.linear(x, w), [1]), w)
print("max abs difference:", np.abs(approx - w.grad).max())

# %% [markdown]
# The same check on the whole segmenter: encoder, fusion head and loss.

# %%
from segcross.encoder import EncoderConfig
from segcross.model import SegmentationModel
from segcross.textprep import PreprocessConfig, Sentence, TokenizedDocument, pack_segments

cfg = EncoderConfig(vocab_size=12, d_model=8, n_heads=2, n_layers=1, d_ff=8, max_positions=16)
model = SegmentationModel.init(cfg)
doc = TokenizedDocument("demo", [Sentence("", [5, 6, 7], 0), Sentence("", [8, 9], 1), Sentence("", [10, 11], 2)], [0, 1, 1])
batch = pack_segments(doc, PreprocessConfig(L=3, M=9, K=3))
print("segments:", [s.sentence_indices for s in batch.segments])

f = lambda: T.cross_entropy(model.logits(batch), doc.labels)
T.backward(f(), params=model.parameters())
p = model.params["csfm.w1"]
analytic = p.grad.copy()
rel = np.linalg.norm(numeric(f, p) - analytic) / np.linalg.norm(analytic)
print("relative error on csfm.w1:", rel)
