import dataclasses
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from segcross.model import SegmentationModel
from segcross.textprep import ConfigError
from segcross.training import (
    Metrics,
    TrainConfig,
    boundary_counts,
    evaluate,
    sweep_input_length,
    synth_corpus,
    train,
    write_sweep_csv,
)

labels = st.lists(st.integers(0, 1), min_size=1, max_size=40)


class TestMetrics:
    def test_perfect(self):
        m = boundary_counts([0, 1, 0, 1], [0, 1, 0, 1], exclude_final=False)
        assert (m.tp, m.fp, m.fn) == (2, 0, 0) and m.f1 == 1.0

    def test_mixed(self):
        m = boundary_counts([0, 1, 0, 1], [1, 0, 0, 1], exclude_final=False)
        assert (m.tp, m.fp, m.fn) == (1, 1, 1)
        assert m.precision == m.recall == m.f1 == 0.5

    def test_final_sentence_excluded_by_default(self):
        m = boundary_counts([0, 0, 1], [0, 0, 1])
        assert (m.tp, m.fp, m.fn) == (0, 0, 0)
        assert m.f1 == 0.0

    def test_zero_denominators(self):
        m = Metrics()
        assert m.precision == m.recall == m.f1 == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            boundary_counts([0, 1], [0])

    def test_summary_format(self):
        assert Metrics(1, 1, 0).summary() == "precision=0.500000, recall=1.000000, f1=0.666667"

    @given(labels)
    def test_self_comparison(self, gold):
        m = boundary_counts(gold, gold, exclude_final=False)
        assert m.fp == m.fn == 0
        assert m.f1 == (1.0 if any(gold) else 0.0)

    @given(st.data())
    def test_identities(self, data):
        gold = data.draw(labels)
        pred = data.draw(st.lists(st.integers(0, 1), min_size=len(gold), max_size=len(gold)))
        m = boundary_counts(gold, pred, exclude_final=False)
        assert m.tp + m.fn == sum(gold)
        assert m.tp + m.fp == sum(pred)
        assert 0.0 <= m.f1 <= 1.0
        if m.precision + m.recall:
            assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))
        flipped = boundary_counts(pred, gold, exclude_final=False)
        assert (flipped.tp, flipped.fp, flipped.fn) == (m.tp, m.fn, m.fp)

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=5))
    def test_addition_is_micro_average(self, parts):
        total = sum((Metrics(*p) for p in parts), Metrics())
        assert (total.tp, total.fp, total.fn) == tuple(map(sum, zip(*parts)))


class TestSynth:
    def test_structure(self):
        docs = synth_corpus(10, n_topics=3, seed=1)
        for doc in docs:
            assert sum(doc.labels) == 3 and doc.labels[-1] == 1
            topics = [s.text.split()[0][:2] for s in doc.sentences]
            blocks = [topics[0]] + [b for a, b in zip(topics, topics[1:]) if a != b]
            assert sorted(blocks) == ["t0", "t1", "t2"]
            for s in doc.sentences:
                assert len({w[:2] for w in s.text.split()}) == 1

    def test_boundaries_at_topic_changes(self):
        for doc in synth_corpus(20, seed=2):
            topics = [s.text[:2] for s in doc.sentences]
            expected = [int(i == len(topics) - 1 or topics[i] != topics[i + 1]) for i in range(len(topics))]
            assert doc.labels == expected

    def test_deterministic(self):
        a, b = synth_corpus(5, seed=9), synth_corpus(5, seed=9)
        assert [d.texts for d in a] == [d.texts for d in b]
        assert [d.texts for d in a] != [d.texts for d in synth_corpus(5, seed=10)]

    def test_rejects_single_topic(self):
        with pytest.raises(ValueError):
            synth_corpus(3, n_topics=1)


class TestTrain:
    def test_config_from_dict(self):
        cfg = TrainConfig.from_dict({"lr": 0.01, "preprocess": {"M": 64}, "encoder": {"d_model": 8, "n_heads": 2}})
        assert cfg.lr == 0.01 and cfg.preprocess.M == 64 and cfg.encoder_config(10).d_model == 8
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"learning_rate": 1})

    def test_loss_log(self, tiny_corpus, tiny_train_config, tmp_path):
        docs, vocab = tiny_corpus
        result = train(docs[:4], dataclasses.replace(tiny_train_config, epochs=1), vocab)
        path = tmp_path / "loss.csv"
        result.write_loss_log(path)
        rows = path.read_text().splitlines()
        assert rows[0] == "epoch,mean_loss" and len(rows) == 3

    def test_zero_lr_keeps_parameters(self, tiny_corpus, tiny_train_config):
        docs, vocab = tiny_corpus
        cfg = dataclasses.replace(tiny_train_config, lr=0.0, epochs=1)
        trained = train(docs[:4], cfg, vocab).checkpoint
        fresh = SegmentationModel.init(cfg.encoder_config(vocab.size))
        for name, p in fresh.params.items():
            assert np.array_equal(trained.params[name], np.float32(p.data))

    def test_deterministic(self, tiny_corpus, tiny_train_config):
        docs, vocab = tiny_corpus
        cfg = dataclasses.replace(tiny_train_config, epochs=1)
        a, b = train(docs[:6], cfg, vocab), train(docs[:6], cfg, vocab)
        assert a.losses == b.losses
        assert all(np.array_equal(a.checkpoint.params[n], b.checkpoint.params[n]) for n in a.checkpoint.params)

    @pytest.mark.parametrize("csfm_enabled", [True, False])
    def test_loss_decreases(self, tiny_corpus, tiny_train_config, csfm_enabled):
        docs, vocab = tiny_corpus
        cfg = dataclasses.replace(tiny_train_config, epochs=3, csfm_enabled=csfm_enabled)
        losses = train(docs[:16], cfg, vocab).losses
        assert len(losses) == 4
        assert losses[-1] < losses[0]

    def test_vocab_mismatch(self, tiny_corpus, tiny_train_config, small_vocab):
        docs, _ = tiny_corpus
        with pytest.raises(ValueError):
            train(docs[:2], tiny_train_config, small_vocab)

    def test_empty(self, tiny_corpus, tiny_train_config):
        with pytest.raises(ValueError):
            train([], tiny_train_config, tiny_corpus[1])


class TestEvaluate:
    def test_order_invariant(self, tiny_corpus, tiny_checkpoint):
        docs = tiny_corpus[0][16:]
        a = evaluate(docs, tiny_checkpoint)
        b = evaluate(docs[::-1], tiny_checkpoint)
        assert a == b

    def test_jobs_match_serial(self, tiny_corpus, tiny_checkpoint):
        docs = tiny_corpus[0][16:]
        assert evaluate(docs, tiny_checkpoint, jobs=3) == evaluate(docs, tiny_checkpoint)

    def test_final_boundary_flag(self, tiny_corpus, tiny_checkpoint):
        docs = tiny_corpus[0][16:]
        excl = evaluate(docs, tiny_checkpoint)
        incl = evaluate(docs, tiny_checkpoint, include_final_boundary=True)
        assert incl.tp + incl.fn == excl.tp + excl.fn + len(docs)


class TestSweep:
    def test_rows_and_csv(self, tiny_corpus, tiny_checkpoint):
        docs = tiny_corpus[0][16:]
        rows = sweep_input_length(docs, tiny_checkpoint, [16, 32, 48, 64, 2])
        assert [r.M for r in rows] == [16, 32, 48, 64, 2]
        assert all(r.metrics is not None for r in rows[:4])
        assert rows[4].metrics is None and rows[4].note.startswith("skipped")
        buf = io.StringIO()
        write_sweep_csv(rows, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "M,precision,recall,f1,tp,fp,fn,note"
        assert len(lines) == 6

    def test_beyond_max_positions(self, tiny_corpus, tiny_checkpoint):
        rows = sweep_input_length(tiny_corpus[0][16:18], tiny_checkpoint, [128])
        assert rows[0].metrics is None

    def test_matching_M_reproduces_evaluate(self, tiny_corpus, tiny_checkpoint):
        docs = tiny_corpus[0][16:]
        (row,) = sweep_input_length(docs, tiny_checkpoint, [tiny_checkpoint.preprocess.M])
        assert row.metrics == evaluate(docs, tiny_checkpoint)

    def test_empty_list(self, tiny_checkpoint):
        assert sweep_input_length([], tiny_checkpoint, []) == []

    def test_retrain_mode(self, tiny_corpus, tiny_train_config):
        docs, vocab = tiny_corpus
        cfg = dataclasses.replace(tiny_train_config, epochs=1)
        rows = sweep_input_length(docs[20:], None, [24, 96], mode="retrain", train_data=docs[:4], cfg=cfg, vocab=vocab)
        assert [r.metrics is not None for r in rows] == [True, True]

    def test_bad_mode(self, tiny_checkpoint):
        with pytest.raises(ValueError):
            sweep_input_length([], tiny_checkpoint, [16], mode="grid")
