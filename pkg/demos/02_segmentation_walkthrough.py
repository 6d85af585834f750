# %% [markdown]
# # Training and using a segmenter
#
# A synthetic corpus makes the task checkable: each document is a few
# blocks of sentences, each block drawn from a topic with its own words.
# The boundary label marks the last sentence of each block.

# %%
from segcross.textprep import PreprocessConfig, pack_segments, paragraph_spans
from segcross.training import TrainConfig, evaluate, synth_corpus, synth_vocab, train

docs = synth_corpus(250, n_topics=2, seed=42)
vocab = synth_vocab(2, 40)
print(docs[0].texts[:3], docs[0].labels)

# %% [markdown]
# Documents are packed into segments of at most `M` tokens. Each segment
# is `[CLS] s1 [SENT] s2 [SENT] ... [SEP]`.

# %%
batch = pack_segments(docs[0], PreprocessConfig(L=32, M=40))
for seg in batch.segments:
    print(seg.sentence_indices, seg.length)

# %% [markdown]
# Train on 200 documents and measure boundary F1 on the other 50. The last
# sentence of every document always ends a paragraph, so it is not scored.

# %%
result = train(docs[:200], TrainConfig(epochs=10), vocab)
print("loss per epoch:", [round(l, 4) for l in result.losses])
ckpt = result.checkpoint
print(evaluate(docs[200:], ckpt).summary())

# %% [markdown]
# The same weights with the cross-segment context switched off, for
# comparison. The head was trained with the context, so this is a probe
# rather than a fair ablation; train with `csfm_enabled=False` for that.

# %%
print(evaluate(docs[200:], ckpt, csfm_enabled=False).summary())

# %% [markdown]
# Segmenting new text only needs sentences.

# %%
sentences = docs[201].texts
labels = ckpt.segment_sentences(sentences)
print(labels)
print(paragraph_spans(labels))
