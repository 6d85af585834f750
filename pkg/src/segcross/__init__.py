"""Text semantic segmentation with cross-segment fusion, plus RAG chunking."""

from .chunker import Chunk, ChunkerConfig, EmbedderSpec, RetrievalIndex, retrieve_topk, split_recursive
from .csfm import CsfmWeights, forward_document, fuse, global_repr, segment_repr
from .encoder import EncoderConfig, encode, init_weights
from .model import Checkpoint, SegmentationModel, load_checkpoint, save_checkpoint
from .tensor import Tensor, backward
from .textprep import (
    PreprocessConfig,
    RawDocument,
    TokenizedDocument,
    Vocabulary,
    build_vocab,
    pack_segments,
    reconstruct_partition,
    split_sentences,
    tokenize,
)
from .training import Metrics, TrainConfig, evaluate, synth_corpus, synth_vocab, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "Chunk",
    "ChunkerConfig",
    "CsfmWeights",
    "EmbedderSpec",
    "EncoderConfig",
    "Metrics",
    "PreprocessConfig",
    "RawDocument",
    "RetrievalIndex",
    "SegmentationModel",
    "Tensor",
    "TokenizedDocument",
    "TrainConfig",
    "Vocabulary",
    "backward",
    "build_vocab",
    "encode",
    "evaluate",
    "forward_document",
    "fuse",
    "global_repr",
    "init_weights",
    "load_checkpoint",
    "pack_segments",
    "reconstruct_partition",
    "retrieve_topk",
    "save_checkpoint",
    "segment_repr",
    "split_recursive",
    "split_sentences",
    "synth_corpus",
    "synth_vocab",
    "tokenize",
    "train",
]
