"""Model-driven recursive chunking, embeddings and top-k retrieval for RAG.

``split_recursive`` keeps a worklist of sentence ranges. A range that fits
the length threshold becomes a chunk; a longer one is handed to the
segmentation model and its paragraphs go back on the list. When the model
finds no internal boundary the range is cut at its middle sentence, so
every pass makes progress.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
import urllib.error
import urllib.request
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .container import pack_arrays, read_container, unpack_arrays, write_container
from .textprep import reconstruct_partition, sentence_spans, word_tokens

logger = logging.getLogger(__name__)

INDEX_FORMAT = "segcross-index"
EMBED_URL_ENV = "SEGCROSS_EMBED_URL"
COMPLETE_URL_ENV = "SEGCROSS_COMPLETE_URL"
TIMEOUT_ENV = "SEGCROSS_ENDPOINT_TIMEOUT"
RETRIES_ENV = "SEGCROSS_ENDPOINT_RETRIES"


class Segmenter(Protocol):
    def __call__(self, sentences: Sequence[str]) -> Sequence[int]: ...


def as_segmenter(model) -> Segmenter:
    """Accept a checkpoint (anything with ``segment_sentences``) or a callable."""
    if hasattr(model, "segment_sentences"):
        return model.segment_sentences
    if callable(model):
        return model
    raise TypeError(f"cannot segment with {type(model).__name__}")


@dataclass
class Chunk:
    text: str
    sentence_span: tuple[int, int]
    depth: int
    oversize: bool = False

    @property
    def char_len(self) -> int:
        return len(self.text)

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "sentence_span": list(self.sentence_span),
            "char_len": self.char_len,
            "depth": self.depth,
            "oversize": self.oversize,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Chunk":
        return cls(obj["text"], tuple(obj["sentence_span"]), int(obj.get("depth", 0)), bool(obj.get("oversize", False)))


@dataclass(frozen=True)
class ChunkerConfig:
    max_chunk_chars: int = 1000
    max_depth: int = 8
    min_sentences_per_chunk: int = 1
    length_unit: str = "chars"

    def __post_init__(self):
        if self.max_chunk_chars <= 0:
            raise ValueError("max_chunk_chars must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_sentences_per_chunk < 1:
            raise ValueError("min_sentences_per_chunk must be >= 1")
        if self.length_unit not in ("chars", "tokens"):
            raise ValueError("length_unit must be 'chars' or 'tokens'")

    def measure(self, text: str) -> int:
        return len(text) if self.length_unit == "chars" else len(word_tokens(text))


def rag_sentence_spans(text: str) -> list[tuple[int, int]]:
    """Sentences of raw RAG text: break after Latin/CJK periods and at newlines."""
    return sentence_spans(text, "period")


def _merge_small(paragraphs: list[list[int]], min_size: int) -> list[list[int]]:
    if min_size <= 1:
        return paragraphs
    out: list[list[int]] = []
    for p in paragraphs:
        if out and (len(out[-1]) < min_size or len(p) < min_size):
            out[-1] = out[-1] + p
        else:
            out.append(p)
    return out


def split_recursive(doc_text: str, model, cfg: ChunkerConfig) -> list[Chunk]:
    """Split ``doc_text`` into chunks whose concatenation is ``doc_text``.

    Ranges still over the threshold at ``max_depth``, and single sentences
    over it at any depth, are emitted with ``oversize=True``.
    """
    if not doc_text:
        return []
    segment = as_segmenter(model)
    spans = rag_sentence_spans(doc_text)
    sentences = [doc_text[a:b] for a, b in spans]

    def text_of(lo: int, hi: int) -> str:
        return doc_text[spans[lo][0] : spans[hi][1]]

    chunks: list[Chunk] = []
    # stack of (lo, hi, depth) in reverse document order
    work = [(0, len(spans) - 1, 0)]
    while work:
        lo, hi, depth = work.pop()
        text = text_of(lo, hi)
        if cfg.measure(text) <= cfg.max_chunk_chars:
            chunks.append(Chunk(text, (lo, hi), depth))
            continue
        if lo == hi or depth >= cfg.max_depth:
            chunks.append(Chunk(text, (lo, hi), depth, oversize=True))
            continue
        labels = list(segment([s.strip() for s in sentences[lo : hi + 1]]))
        if len(labels) != hi - lo + 1:
            raise ValueError(f"segmenter returned {len(labels)} labels for {hi - lo + 1} sentences")
        pieces = _merge_small(reconstruct_partition(len(labels), labels), cfg.min_sentences_per_chunk)
        if len(pieces) < 2:
            mid = (hi - lo + 1) // 2
            pieces = [list(range(0, mid)), list(range(mid, hi - lo + 1))]
        for p in reversed(pieces):
            work.append((lo + p[0], lo + p[-1], depth + 1))
    return chunks


# ---------------------------------------------------------------------------
# embeddings


class EndpointError(RuntimeError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class EndpointTimeout(EndpointError):
    pass


class TransportError(EndpointError):
    """Connection-level failure; safe to retry."""


class UnembeddableError(ValueError):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    timeout: float = 30.0
    retries: int = 2

    @classmethod
    def from_env(cls, url_env: str, url: str | None = None) -> "EndpointConfig":
        url = url or os.environ.get(url_env)
        if not url:
            raise EndpointError(f"no endpoint URL given and {url_env} is unset")
        return cls(
            url,
            float(os.environ.get(TIMEOUT_ENV, 30.0)),
            int(os.environ.get(RETRIES_ENV, 2)),
        )


def post_json(endpoint: EndpointConfig, payload: dict) -> dict:
    """POST ``payload`` and decode the JSON reply.

    Timeouts, connection failures and 5xx replies are retried up to
    ``endpoint.retries`` extra times; 4xx replies are not retried.
    """
    body = json.dumps(payload).encode("utf-8")
    last: EndpointError | None = None
    for attempt in range(endpoint.retries + 1):
        req = urllib.request.Request(endpoint.url, body, {"Content-Type": "application/json"}, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=endpoint.timeout) as resp:
                raw = resp.read()
        except urllib.error.HTTPError as exc:
            last = EndpointError(f"{endpoint.url} answered HTTP {exc.code}", exc.code)
            if exc.code < 500:
                raise last from exc
        except TimeoutError:
            last = EndpointTimeout(f"{endpoint.url} timed out after {endpoint.timeout}s")
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, TimeoutError):
                last = EndpointTimeout(f"{endpoint.url} timed out after {endpoint.timeout}s")
            else:
                last = TransportError(f"{endpoint.url}: {exc.reason}")
        else:
            try:
                return json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise EndpointError(f"{endpoint.url} returned malformed JSON") from exc
        if attempt < endpoint.retries:
            logger.warning("endpoint attempt %d failed: %s", attempt + 1, last)
            time.sleep(min(0.05 * 2**attempt, 1.0))
    raise last


@dataclass(frozen=True)
class EmbedderSpec:
    kind: str = "hashed-ngram"
    dim: int = 256
    seed: int = 0
    url: str | None = None
    ngram: int = 3

    def __post_init__(self):
        if self.kind not in ("hashed-ngram", "external-endpoint"):
            raise ValueError(f"unknown embedder kind {self.kind!r}")
        if self.kind == "hashed-ngram" and self.dim < 8:
            raise ValueError("hashed-ngram embeddings need dim >= 8")


def ngram_bucket(gram: str, dim: int, seed: int) -> int:
    h = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, salt=seed.to_bytes(8, "little", signed=False))
    return int.from_bytes(h.digest(), "little") % dim


def char_ngrams(text: str, n: int = 3) -> list[str]:
    if len(text) < n:
        return [text] if text else []
    return [text[i : i + n] for i in range(len(text) - n + 1)]


def embed(text: str, spec: EmbedderSpec, endpoint: EndpointConfig | None = None) -> np.ndarray:
    """Embedding vector for ``text``; the hashed kind is L2-normalised.

    Empty text yields the zero vector, which retrieval treats as
    unembeddable.
    """
    if spec.kind == "external-endpoint":
        if not text:
            return np.zeros(spec.dim)
        endpoint = endpoint or EndpointConfig.from_env(EMBED_URL_ENV, spec.url)
        reply = post_json(endpoint, {"input": text})
        try:
            vec = np.asarray(reply["embedding"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise EndpointError("embedding reply lacks a numeric 'embedding' list") from exc
        if vec.shape != (spec.dim,):
            raise EndpointError(f"endpoint returned {vec.shape} vector, expected ({spec.dim},)")
        return vec
    vec = np.zeros(spec.dim)
    for gram in char_ngrams(text, spec.ngram):
        vec[ngram_bucket(gram, spec.dim, spec.seed)] += 1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


# ---------------------------------------------------------------------------
# retrieval


@dataclass
class RetrievalIndex:
    chunks: list[Chunk]
    embeddings: np.ndarray
    spec: EmbedderSpec = field(default_factory=EmbedderSpec)

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64).reshape(len(self.chunks), -1)
        self.norms = np.linalg.norm(self.embeddings, axis=1)

    @classmethod
    def build(cls, chunks: Sequence[Chunk], spec: EmbedderSpec, jobs: int = 1, endpoint=None) -> "RetrievalIndex":
        chunks = list(chunks)
        if jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(jobs) as pool:
                rows = list(pool.map(lambda c: embed(c.text, spec, endpoint), chunks))
        else:
            rows = [embed(c.text, spec, endpoint) for c in chunks]
        matrix = np.vstack(rows) if rows else np.zeros((0, spec.dim))
        return cls(chunks, matrix, spec)

    def __len__(self) -> int:
        return len(self.chunks)

    def save(self, path: str | Path) -> None:
        manifest = {
            "embedder": asdict(self.spec),
            "dim": int(self.embeddings.shape[1]) if len(self) else self.spec.dim,
            "dtype": "<f8",
            "chunks": [c.to_json() for c in self.chunks],
        }
        # full precision so a reloaded index scores exactly like the original
        write_container(path, INDEX_FORMAT, manifest, pack_arrays([self.embeddings], "<f8"))

    @classmethod
    def load(cls, path: str | Path) -> "RetrievalIndex":
        manifest, blob = read_container(path, INDEX_FORMAT)
        chunks = [Chunk.from_json(c) for c in manifest["chunks"]]
        (matrix,) = unpack_arrays(blob, [(len(chunks), manifest["dim"])], manifest.get("dtype", "<f4"))
        return cls(chunks, matrix, EmbedderSpec(**manifest["embedder"]))


def cosine_scores(index: RetrievalIndex, query_vec: np.ndarray) -> np.ndarray:
    q = np.asarray(query_vec, dtype=np.float64)
    q_norm = np.linalg.norm(q)
    if q_norm == 0:
        raise UnembeddableError("query embedding has zero norm")
    safe = np.where(index.norms > 0, index.norms, 1.0)
    scores = (index.embeddings @ q) / (safe * q_norm)
    return np.clip(np.where(index.norms > 0, scores, 0.0), -1.0, 1.0)


def retrieve_topk(index: RetrievalIndex, query_vec: np.ndarray, k: int) -> list[tuple[int, float]]:
    """``min(k, n)`` (chunk_id, cosine) pairs, best first, ties by lower id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise ValueError("empty index")
    scores = cosine_scores(index, query_vec)
    order = np.lexsort((np.arange(len(scores)), -scores))
    return [(int(i), float(scores[i])) for i in order[:k]]


def assemble_context(chunks: Sequence[Chunk | str], template: str, question: str) -> str:
    if "{context}" not in template or "{question}" not in template:
        raise ValueError("template must contain {context} and {question}")
    context = "\n\n".join(c.text if isinstance(c, Chunk) else c for c in chunks)
    # plain replacement: chunk text may itself contain braces
    return template.replace("{question}", "\0Q\0").replace("{context}", context).replace("\0Q\0", question)


def complete(prompt: str, endpoint: EndpointConfig) -> str:
    reply = post_json(endpoint, {"prompt": prompt})
    text = reply.get("text") if isinstance(reply, dict) else None
    if not isinstance(text, str):
        raise EndpointError("completion reply lacks a 'text' string")
    return text


DEFAULT_TEMPLATE = (
    "Answer the question based on the given passages.\n\n{context}\n\nQuestion: {question}\nAnswer:"
)
