"""Sentence splitting, word-level tokenization and document packing.

A document is a sequence of sentences with binary boundary labels: label 1
means the sentence closes a paragraph. Before encoding, sentences are packed
greedily into segments of at most ``M`` tokens, each shaped as::

    [CLS] s_a [SENT] s_b [SENT] ... [SEP]
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PAD, UNK, CLS, SEP, SENT = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[SENT]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, SENT)

SEPARATOR_MODES = ("newline", "period", "custom")

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)
# A Latin period only ends a sentence when followed by whitespace or the end
# of text; the CJK full stop always does.
_PERIOD_RE = re.compile(r"\.(?=\s|$)|。")


class ConfigError(ValueError):
    """Invalid preprocessing configuration."""


class AlignmentError(ValueError):
    """A segment batch does not belong to the document it is aligned with."""


class Vocabulary:
    """Dense token-to-id map; the five special tokens always take ids 0-4."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            tokens = list(SPECIAL_TOKENS) + [t for t in tokens if t not in SPECIAL_TOKENS]
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.tokens = tokens
        self.token_to_id = {t: i for i, t in enumerate(tokens)}

    pad_id = property(lambda self: 0)
    unk_id = property(lambda self: 1)
    cls_id = property(lambda self: 2)
    sep_id = property(lambda self: 3)
    sent_id = property(lambda self: 4)

    @property
    def specials(self) -> dict[str, int]:
        return {t: self.token_to_id[t] for t in SPECIAL_TOKENS}

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.tokens, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def __repr__(self) -> str:
        return f"Vocabulary(size={self.size}, fingerprint={self.fingerprint})"


@dataclass
class Sentence:
    text: str
    token_ids: list[int]
    original_index: int


@dataclass
class TokenizedDocument:
    doc_id: str
    sentences: list[Sentence]
    labels: list[int]
    vocab_fingerprint: str | None = None

    def __post_init__(self):
        if len(self.labels) != len(self.sentences):
            raise ValueError(
                f"{self.doc_id}: {len(self.labels)} labels for {len(self.sentences)} sentences"
            )
        if any(y not in (0, 1) for y in self.labels):
            raise ValueError(f"{self.doc_id}: labels must be 0 or 1")

    @property
    def n(self) -> int:
        return len(self.sentences)

    @property
    def total_tokens(self) -> int:
        return sum(len(s.token_ids) for s in self.sentences)

    @property
    def texts(self) -> list[str]:
        return [s.text for s in self.sentences]


@dataclass
class RawDocument:
    """A document in the canonical JSONL form: sentences as plain strings."""

    doc_id: str
    sentences: list[str]
    labels: list[int]

    def to_json(self) -> dict:
        return {"id": self.doc_id, "sentences": self.sentences, "labels": self.labels}


@dataclass(frozen=True)
class PreprocessConfig:
    L: int = 32
    M: int = 128
    K: int = 8
    separator_mode: str = "newline"
    pattern: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.L < 1:
            raise ConfigError(f"L must be positive, got {self.L}")
        # Every sentence must fit one segment: CLS + L tokens + SENT + SEP.
        if self.L > self.M - 3:
            raise ConfigError(f"need L <= M - 3, got L={self.L}, M={self.M}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.separator_mode not in SEPARATOR_MODES:
            raise ConfigError(f"unknown separator mode {self.separator_mode!r}")
        if self.separator_mode == "custom" and not self.pattern:
            raise ConfigError("custom separator mode needs a pattern")

    def replace(self, **changes) -> "PreprocessConfig":
        fields = {
            "L": self.L,
            "M": self.M,
            "K": self.K,
            "separator_mode": self.separator_mode,
            "pattern": self.pattern,
        }
        fields.update(changes)
        return PreprocessConfig(**fields)


@dataclass
class DocumentSegment:
    token_ids: list[int]
    sent_positions: list[int]
    sentence_indices: list[int]

    @property
    def length(self) -> int:
        return len(self.token_ids)


@dataclass
class SegmentBatch:
    doc_id: str
    segments: list[DocumentSegment]
    padded_matrix: np.ndarray
    attention_mask: np.ndarray
    dropped_sentences: int = 0
    n_sentences: int = 0
    pad_id: int = 0

    @property
    def k(self) -> int:
        return len(self.segments)

    @property
    def sentence_indices(self) -> list[int]:
        return [i for seg in self.segments for i in seg.sentence_indices]

    @classmethod
    def from_segments(
        cls,
        doc_id: str,
        segments: list[DocumentSegment],
        pad_id: int = 0,
        dropped: int = 0,
        n_sentences: int | None = None,
        width: int | None = None,
    ) -> "SegmentBatch":
        t_max = max((s.length for s in segments), default=0)
        if width is not None:
            if width < t_max:
                raise ValueError(f"width {width} < longest segment {t_max}")
            t_max = width
        ids = np.full((len(segments), t_max), pad_id, dtype=np.int64)
        mask = np.zeros((len(segments), t_max), dtype=np.int8)
        for j, seg in enumerate(segments):
            ids[j, : seg.length] = seg.token_ids
            mask[j, : seg.length] = 1
        if n_sentences is None:
            n_sentences = sum(len(s.sentence_indices) for s in segments) + dropped
        return cls(doc_id, segments, ids, mask, dropped, n_sentences, pad_id)

    def windows(self, size: int) -> list["SegmentBatch"]:
        """Consecutive sub-batches of at most ``size`` segments each."""
        out = []
        for start in range(0, self.k, size):
            segs = self.segments[start : start + size]
            out.append(SegmentBatch.from_segments(self.doc_id, segs, pad_id=self.pad_id))
        return out


# ---------------------------------------------------------------------------
# splitting and tokenization


def _cut_points(text: str, mode: str, pattern: str | None) -> list[int]:
    cuts = set()
    if mode in ("newline", "period"):
        cuts.update(m.end() for m in re.finditer("\n", text))
    if mode == "period":
        cuts.update(m.end() for m in _PERIOD_RE.finditer(text))
    elif mode == "custom":
        if not pattern:
            raise ConfigError("custom separator mode needs a pattern")
        cuts.update(m.end() for m in re.finditer(pattern, text) if m.end() > m.start())
    elif mode not in SEPARATOR_MODES:
        raise ConfigError(f"unknown separator mode {mode!r}")
    return sorted(c for c in cuts if 0 < c < len(text))


def sentence_spans(text: str, mode: str = "newline", pattern: str | None = None) -> list[tuple[int, int]]:
    """Character spans ``[start, end)`` that tile ``text`` exactly.

    Each span holds one sentence plus the separator and whitespace around it.
    Whitespace-only pieces are folded into a neighbour, so every span has
    visible content (unless the whole text is blank).
    """
    if not text:
        return []
    bounds = [0, *_cut_points(text, mode, pattern), len(text)]
    spans: list[list[int]] = []
    for a, b in zip(bounds, bounds[1:]):
        if spans and not text[a:b].strip():
            spans[-1][1] = b
        elif spans and not text[spans[-1][0] : spans[-1][1]].strip():
            spans[-1][1] = b
        else:
            spans.append([a, b])
    return [(a, b) for a, b in spans]


def split_sentences(raw_text: str, mode: str = "newline", pattern: str | None = None) -> list[str]:
    pieces = (raw_text[a:b].strip() for a, b in sentence_spans(raw_text, mode, pattern))
    return [p for p in pieces if p]


def word_tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def tokenize(sentence_text: str, vocab: Vocabulary, L: int, original_index: int = 0) -> Sentence:
    if L < 1:
        raise ConfigError("L must be positive")
    ids = [vocab.lookup(t) for t in word_tokens(sentence_text)[:L]]
    if not ids and sentence_text.strip():
        ids = [vocab.unk_id]  # punctuation-only sentence still gets a token
    return Sentence(sentence_text, ids, original_index)


def build_vocab(corpus: Iterable[str], min_freq: int = 1) -> Vocabulary:
    """Word vocabulary from raw texts, most frequent first, ties by token."""
    counts: Counter[str] = Counter()
    for text in corpus:
        counts.update(word_tokens(text))
    kept = [t for t, c in counts.items() if c >= min_freq and t not in SPECIAL_TOKENS]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(list(SPECIAL_TOKENS) + kept)


def tokenize_document(doc: RawDocument, vocab: Vocabulary, L: int) -> TokenizedDocument:
    sents = [tokenize(s, vocab, L, i) for i, s in enumerate(doc.sentences)]
    return TokenizedDocument(doc.doc_id, sents, list(doc.labels), vocab.fingerprint)


# ---------------------------------------------------------------------------
# packing


def pack_segments(
    doc: TokenizedDocument,
    cfg: PreprocessConfig,
    vocab: Vocabulary | None = None,
    cap: bool = True,
) -> SegmentBatch:
    """Greedy left-to-right packing of sentences into segments of <= M tokens.

    A sentence costs its token count plus one [SENT]; it joins the open
    segment iff ``payload + cost + 2 <= M`` (the 2 being [CLS] and [SEP]).
    With ``cap`` set, only the first K segments are kept and the sentences
    they miss are counted in ``dropped_sentences``. Inference uses
    ``cap=False`` and scores the segments window by window instead.
    """
    cls_id, sep_id, sent_id, pad_id = 2, 3, 4, 0
    if vocab is not None:
        cls_id, sep_id, sent_id, pad_id = vocab.cls_id, vocab.sep_id, vocab.sent_id, vocab.pad_id

    segments: list[DocumentSegment] = []
    ids: list[int] = [cls_id]
    positions: list[int] = []
    indices: list[int] = []

    def flush():
        nonlocal ids, positions, indices
        segments.append(DocumentSegment(ids + [sep_id], positions, indices))
        ids, positions, indices = [cls_id], [], []

    for i, sent in enumerate(doc.sentences):
        n_tok = len(sent.token_ids)
        if n_tok > cfg.L:
            raise ConfigError(f"{doc.doc_id}: sentence {i} has {n_tok} tokens > L={cfg.L}")
        cost = n_tok + 1
        payload = len(ids) - 1
        if indices and payload + cost + 2 > cfg.M:
            flush()
        ids.extend(sent.token_ids)
        ids.append(sent_id)
        positions.append(len(ids) - 1)
        indices.append(i)
    if indices:
        flush()

    dropped = 0
    if cap and len(segments) > cfg.K:
        segments = segments[: cfg.K]
        dropped = doc.n - sum(len(s.sentence_indices) for s in segments)
    return SegmentBatch.from_segments(doc.doc_id, segments, pad_id, dropped, doc.n)


def align_labels(batch: SegmentBatch, doc: TokenizedDocument) -> list[list[int]]:
    if batch.doc_id != doc.doc_id or batch.n_sentences != doc.n:
        raise AlignmentError(f"batch {batch.doc_id!r} was not packed from document {doc.doc_id!r}")
    out = []
    for seg in batch.segments:
        if any(i >= doc.n for i in seg.sentence_indices):
            raise AlignmentError(f"batch {batch.doc_id!r} covers sentences missing from the document")
        out.append([doc.labels[i] for i in seg.sentence_indices])
    return out


def reconstruct_partition(doc: TokenizedDocument | int, predicted_labels: Sequence[int]) -> list[list[int]]:
    """Contiguous paragraphs of sentence indices; a label 1 closes a paragraph."""
    n = doc if isinstance(doc, int) else doc.n
    if len(predicted_labels) != n:
        raise ValueError(f"{len(predicted_labels)} labels for {n} sentences")
    paragraphs, current = [], []
    for i, y in enumerate(predicted_labels):
        current.append(i)
        if y == 1:
            paragraphs.append(current)
            current = []
    if current:
        paragraphs.append(current)
    return paragraphs


def paragraph_spans(labels: Sequence[int]) -> list[tuple[int, int]]:
    """Inclusive ``(first, last)`` sentence index of every paragraph."""
    return [(p[0], p[-1]) for p in reconstruct_partition(len(labels), labels)]


# ---------------------------------------------------------------------------
# dataset files


def read_jsonl(path: str | Path) -> list[RawDocument]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc = RawDocument(str(obj["id"]), list(obj["sentences"]), [int(y) for y in obj["labels"]])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed record ({exc})") from exc
            if len(doc.sentences) != len(doc.labels):
                raise ValueError(f"{path}:{lineno}: sentences and labels differ in length")
            docs.append(doc)
    return docs


def write_jsonl(docs: Iterable[RawDocument], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json(), ensure_ascii=False) + "\n")


def to_raw(doc: TokenizedDocument) -> RawDocument:
    return RawDocument(doc.doc_id, doc.texts, list(doc.labels))


def parse_wiki727k(text: str, doc_id: str) -> RawDocument:
    """Convert a WIKI-727k style export to a labelled document.

    Lines starting with ``========`` open a new gold paragraph; every other
    non-blank line is a sentence. ``***LIST***`` placeholder lines are kept
    out of the sentence stream.
    """
    sentences: list[str] = []
    labels: list[int] = []
    for line in text.splitlines():
        stripped = line.strip()
        if line.startswith("========"):
            if labels:
                labels[-1] = 1
            continue
        if not stripped or stripped == "***LIST***":
            continue
        sentences.append(stripped)
        labels.append(0)
    if labels:
        labels[-1] = 1
    return RawDocument(doc_id, sentences, labels)


def iter_wiki727k(path: str | Path) -> Iterator[RawDocument]:
    path = Path(path)
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for f in files:
        doc = parse_wiki727k(f.read_text(encoding="utf-8"), f.stem)
        if doc.sentences:
            yield doc
        else:
            logger.warning("skipping %s: no sentences", f)
