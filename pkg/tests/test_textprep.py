import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_doc
from segcross.textprep import (
    AlignmentError,
    ConfigError,
    PreprocessConfig,
    RawDocument,
    Vocabulary,
    align_labels,
    build_vocab,
    iter_wiki727k,
    pack_segments,
    paragraph_spans,
    parse_wiki727k,
    read_jsonl,
    reconstruct_partition,
    sentence_spans,
    split_sentences,
    tokenize,
    tokenize_document,
    write_jsonl,
)


def scan_period_split(text):
    """Character scan: cut after every '.' followed by a space or the end."""
    out, cur = [], ""
    for i, ch in enumerate(text):
        cur += ch
        if ch == "." and (i + 1 == len(text) or text[i + 1].isspace()):
            out.append(cur.strip())
            cur = ""
    if cur.strip():
        out.append(cur.strip())
    return out


class TestSplitSentences:
    def test_newline(self):
        assert split_sentences("A.\nB.\n", "newline") == ["A.", "B."]

    def test_empty(self):
        assert split_sentences("") == []
        assert split_sentences("", "period") == []

    def test_period_matches_scan_oracle(self):
        text = "x. y. z."
        assert split_sentences(text, "period") == scan_period_split(text) == ["x.", "y.", "z."]

    def test_decimal_point_is_not_a_boundary(self):
        assert split_sentences("Pi is 3.14 roughly. Next one.", "period") == ["Pi is 3.14 roughly.", "Next one."]

    def test_cjk_full_stop(self):
        assert split_sentences("第一句。第二句。", "period") == ["第一句。", "第二句。"]

    def test_custom_pattern(self):
        assert split_sentences("a;b; c", "custom", ";") == ["a;", "b;", "c"]

    def test_blank_lines_dropped(self):
        assert split_sentences("one\n\n\ntwo\n", "newline") == ["one", "two"]

    @given(st.text(alphabet="ab .\n。", max_size=60), st.sampled_from(["newline", "period"]))
    def test_spans_tile_text(self, text, mode):
        spans = sentence_spans(text, mode)
        assert "".join(text[a:b] for a, b in spans) == text
        assert all(b > a for a, b in spans)
        pieces = split_sentences(text, mode)
        assert all(pieces)
        assert "".join(pieces).replace(" ", "") == "".join(text.split())


class TestTokenizeAndVocab:
    def test_known_words(self, small_vocab):
        s = tokenize("the cat", small_vocab, 8)
        assert s.token_ids == [small_vocab.lookup("the"), small_vocab.lookup("cat")]
        assert small_vocab.unk_id not in s.token_ids

    def test_truncation_keeps_prefix(self, small_vocab):
        full = tokenize("the cat sat on the", small_vocab, 10).token_ids
        assert tokenize("the cat sat on the", small_vocab, 3).token_ids == full[:3]

    def test_oov(self, small_vocab):
        assert tokenize("Zzqx!", small_vocab, 8).token_ids == [small_vocab.unk_id]

    def test_punctuation_only_sentence_is_not_empty(self, small_vocab):
        assert tokenize("?!", small_vocab, 8).token_ids == [small_vocab.unk_id]

    def test_lowercase_and_punctuation(self, small_vocab):
        assert tokenize("The CAT.", small_vocab, 8).token_ids[:2] == tokenize("the cat", small_vocab, 8).token_ids

    def test_min_freq(self):
        v = build_vocab(["a a b"], min_freq=2)
        assert "a" in v and "b" not in v
        assert v.size == 6

    def test_empty_corpus_is_specials_only(self):
        v = build_vocab([""])
        assert v.size == 5
        assert len(set(v.specials.values())) == 5

    def test_deterministic(self):
        corpus = ["x y z y", "z z w"]
        assert build_vocab(corpus).token_to_id == build_vocab(corpus).token_to_id

    def test_ids_dense(self, small_vocab):
        assert sorted(small_vocab.token_to_id.values()) == list(range(small_vocab.size))

    def test_duplicate_tokens_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[SENT]", "a", "a"])


class TestConfig:
    def test_l_must_leave_room_for_specials(self):
        PreprocessConfig(L=9, M=12)
        with pytest.raises(ConfigError):
            PreprocessConfig(L=10, M=12)

    def test_k_positive(self):
        with pytest.raises(ConfigError):
            PreprocessConfig(K=0)

    def test_custom_needs_pattern(self):
        with pytest.raises(ConfigError):
            PreprocessConfig(separator_mode="custom")


def greedy_oracle(lengths, M):
    """Segments as maximal runs: each run extends while CLS+SEP+sum(len+1) fits in M."""
    prefix = np.concatenate([[0], np.cumsum(np.asarray(lengths) + 1)])
    runs, a = [], 0
    while a < len(lengths):
        b = a
        while b + 1 < len(lengths) and 2 + prefix[b + 2] - prefix[a] <= M:
            b += 1
        runs.append(list(range(a, b + 1)))
        a = b + 1
    return runs


class TestPackSegments:
    def test_three_sentences_m12(self):
        batch = pack_segments(make_doc([4, 4, 4]), PreprocessConfig(L=4, M=12, K=4))
        assert [s.sentence_indices for s in batch.segments] == greedy_oracle([4, 4, 4], 12) == [[0, 1], [2]]
        assert [s.length for s in batch.segments] == [12, 7]

    def test_single_sentence(self):
        batch = pack_segments(make_doc([4]), PreprocessConfig(L=4, M=12, K=4))
        assert batch.k == 1 and batch.segments[0].length == 7
        seg = batch.segments[0]
        assert seg.token_ids[0] == 2 and seg.token_ids[-1] == 3
        assert seg.sent_positions == [5]

    def test_k_cap_drops_tail(self):
        batch = pack_segments(make_doc([4, 4, 4]), PreprocessConfig(L=4, M=12, K=1))
        assert batch.k == 1
        assert batch.dropped_sentences == 1
        assert batch.sentence_indices == [0, 1]

    def test_uncapped_keeps_everything(self):
        batch = pack_segments(make_doc([4, 4, 4]), PreprocessConfig(L=4, M=12, K=1), cap=False)
        assert batch.k == 2 and batch.dropped_sentences == 0

    def test_padding_and_mask(self):
        batch = pack_segments(make_doc([4, 4, 4]), PreprocessConfig(L=4, M=12, K=4))
        assert batch.padded_matrix.shape == (2, 12)
        assert batch.attention_mask.tolist()[1] == [1] * 7 + [0] * 5
        assert (batch.padded_matrix[batch.attention_mask == 0] == 0).all()

    def test_overlong_sentence_rejected(self):
        with pytest.raises(ConfigError):
            pack_segments(make_doc([6]), PreprocessConfig(L=4, M=12))

    def test_windows(self):
        batch = pack_segments(make_doc([4] * 7), PreprocessConfig(L=4, M=12, K=2), cap=False)
        wins = batch.windows(2)
        assert [w.k for w in wins] == [2, 2]
        assert [i for w in wins for i in w.sentence_indices] == list(range(7))

    @settings(max_examples=200)
    @given(
        st.lists(st.integers(0, 10), max_size=30),
        st.integers(1, 10),
        st.integers(0, 30),
        st.integers(1, 6),
    )
    def test_properties(self, lengths, L, extra, K):
        cfg = PreprocessConfig(L=L, M=L + 3 + extra, K=K)
        lengths = [min(n, L) for n in lengths]
        doc = make_doc(lengths)
        batch = pack_segments(doc, cfg)
        runs = greedy_oracle(lengths, cfg.M)[:K]
        assert [s.sentence_indices for s in batch.segments] == runs
        assert batch.sentence_indices == list(range(doc.n - batch.dropped_sentences))
        assert batch.dropped_sentences == doc.n - sum(map(len, runs))
        assert all(s.length <= cfg.M for s in batch.segments)
        assert batch.k <= K
        assert batch.attention_mask.sum() == sum(s.length for s in batch.segments)
        again = pack_segments(doc, cfg)
        assert again.segments == batch.segments
        assert np.array_equal(again.padded_matrix, batch.padded_matrix)


class TestAlignLabels:
    def test_identity(self):
        doc = make_doc([2, 2, 2], [0, 1, 0])
        assert align_labels(pack_segments(doc, PreprocessConfig(L=2, M=32)), doc) == [[0, 1, 0]]

    def test_split(self):
        doc = make_doc([4, 4, 4], [0, 1, 0])
        assert align_labels(pack_segments(doc, PreprocessConfig(L=4, M=12)), doc) == [[0, 1], [0]]

    def test_k_capped(self):
        doc = make_doc([4, 4, 4], [0, 1, 0])
        assert align_labels(pack_segments(doc, PreprocessConfig(L=4, M=12, K=1)), doc) == [[0, 1]]

    def test_mismatch(self):
        doc = make_doc([4, 4, 4], [0, 1, 0])
        other = make_doc([4, 4], [0, 1], doc_id="other")
        with pytest.raises(AlignmentError):
            align_labels(pack_segments(doc, PreprocessConfig(L=4, M=12)), other)


class TestReconstructPartition:
    def test_two_closed_runs(self):
        assert reconstruct_partition(4, [0, 1, 0, 1]) == [[0, 1], [2, 3]]

    def test_no_boundary(self):
        assert reconstruct_partition(3, [0, 0, 0]) == [[0, 1, 2]]

    def test_all_boundaries(self):
        assert reconstruct_partition(3, [1, 1, 1]) == [[0], [1], [2]]

    def test_spans(self):
        assert paragraph_spans([0, 1, 0, 0]) == [(0, 1), (2, 3)]

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            reconstruct_partition(3, [0, 1])

    @given(st.lists(st.integers(0, 1), max_size=50))
    def test_partition_property(self, labels):
        parts = reconstruct_partition(len(labels), labels)
        flat = [i for p in parts for i in p]
        assert flat == list(range(len(labels)))  # union covers, pairwise disjoint, ordered
        assert all(p == list(range(p[0], p[-1] + 1)) for p in parts)
        assert all(labels[p[-1]] == 1 for p in parts[:-1])


class TestDatasetFiles:
    def test_jsonl_round_trip(self, tmp_path):
        docs = [RawDocument("a", ["x y", "z"], [0, 1]), RawDocument("b", ["ü"], [1])]
        path = tmp_path / "d.jsonl"
        write_jsonl(docs, path)
        assert read_jsonl(path) == docs
        assert json.loads(path.read_text(encoding="utf-8").splitlines()[0]) == {
            "id": "a", "sentences": ["x y", "z"], "labels": [0, 1]
        }

    def test_jsonl_rejects_mismatch(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "sentences": ["x"], "labels": [0, 1]}\n')
        with pytest.raises(ValueError):
            read_jsonl(path)

    def test_wiki727k(self):
        text = "========,1,preface.\nFirst.\nSecond.\n========,2,History.\nThird.\n***LIST***\nFourth.\n"
        doc = parse_wiki727k(text, "w")
        assert doc.sentences == ["First.", "Second.", "Third.", "Fourth."]
        assert doc.labels == [0, 1, 0, 1]

    def test_wiki727k_directory(self, tmp_path):
        (tmp_path / "a").write_text("========,1,x.\nOne.\n")
        (tmp_path / "b").write_text("\n")
        docs = list(iter_wiki727k(tmp_path))
        assert [d.doc_id for d in docs] == ["a"]

    def test_tokenize_document_fingerprint(self, small_vocab):
        doc = tokenize_document(RawDocument("a", ["the cat"], [1]), small_vocab, 4)
        assert doc.vocab_fingerprint == small_vocab.fingerprint
        assert doc.total_tokens == 2
