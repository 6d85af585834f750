import sys

import numpy as np
import pytest

from segcross.encoder import EncoderConfig
from segcross.textprep import PreprocessConfig, Sentence, TokenizedDocument, build_vocab
from segcross.training import TrainConfig, synth_corpus, synth_vocab, train


def make_doc(lengths, labels=None, doc_id="d"):
    """Document whose i-th sentence has ``lengths[i]`` tokens (ids from 5 up)."""
    sents = [Sentence(f"s{i}", [5 + (i + j) % 7 for j in range(n)], i) for i, n in enumerate(lengths)]
    labels = labels if labels is not None else [0] * (len(lengths) - 1) + [1] if lengths else []
    return TokenizedDocument(doc_id, sents, list(labels))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_vocab():
    return build_vocab(["the cat sat on the mat", "a dog ran"])


@pytest.fixture(scope="session")
def tiny_corpus():
    docs = synth_corpus(24, 2, sents_per_topic_range=(2, 4), vocab_per_topic=10, seed=5, words_per_sentence=(2, 4))
    return docs, synth_vocab(2, 10)


@pytest.fixture(scope="session")
def tiny_train_config():
    enc = EncoderConfig(vocab_size=1, d_model=16, n_heads=2, n_layers=1, d_ff=16, max_positions=64)
    return TrainConfig(lr=3e-3, epochs=2, seed=3, preprocess=PreprocessConfig(L=8, M=48, K=4), encoder=enc)


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_corpus, tiny_train_config):
    docs, vocab = tiny_corpus
    return train(docs[:16], tiny_train_config, vocab).checkpoint


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.report_lines():
        terminalreporter.write_line(line)
