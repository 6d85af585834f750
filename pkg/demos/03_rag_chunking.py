# %% [markdown]
# # Model-driven chunking for retrieval
#
# `split_recursive` cuts a document where the segmenter sees paragraph
# boundaries, recursing until every chunk fits the length limit. Any
# callable from a list of sentences to 0/1 labels can act as the model.

# %%
from segcross.chunker import (
    ChunkerConfig,
    DEFAULT_TEMPLATE,
    EmbedderSpec,
    RetrievalIndex,
    assemble_context,
    embed,
    retrieve_topk,
    split_recursive,
)

text = (
    "Bees collect nectar from flowers. The nectar becomes honey in the hive. "
    "A colony can hold tens of thousands of bees. "
    "Granite forms from slowly cooling magma. It is rich in quartz and feldspar. "
    "Many old buildings are faced with granite. "
    "The violin has four strings. It is played with a bow. Its range sits above the viola."
)


def topic_stub(sentences):
    """Mark a boundary before every sentence that starts a new subject."""
    starts = ("Granite", "The violin")
    labels = [0] * len(sentences)
    for i in range(len(sentences) - 1):
        if sentences[i + 1].startswith(starts):
            labels[i] = 1
    labels[-1] = 1
    return labels


chunks = split_recursive(text, topic_stub, ChunkerConfig(max_chunk_chars=160))
for c in chunks:
    print(c.sentence_span, c.depth, repr(c.text))
assert "".join(c.text for c in chunks) == text

# %% [markdown]
# Chunks are embedded with hashed character trigrams and ranked by cosine
# similarity to the question.

# %%
index = RetrievalIndex.build(chunks, EmbedderSpec(dim=256))
question = "What minerals are in granite?"
hits = retrieve_topk(index, embed(question, index.spec), 2)
for i, score in hits:
    print(f"{score:.3f}", index.chunks[i].text[:60])

# %%
prompt = assemble_context([index.chunks[i] for i, _ in hits], DEFAULT_TEMPLATE, question)
print(prompt)

# %% [markdown]
# A trained checkpoint can replace the stub directly:
# `split_recursive(text, checkpoint, cfg)`. To send the prompt to a
# completion service, point `SEGCROSS_COMPLETE_URL` at an endpoint that
# accepts `{"prompt": ...}` and replies `{"text": ...}`, then call
# `segcross.chunker.complete`.
