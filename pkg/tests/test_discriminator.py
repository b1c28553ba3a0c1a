import numpy as np
import pytest

from sentigen.autodiff import Tensor, finite_difference_check
from sentigen.corpus import DialogueExample, SentimentLabel, Utterance
from sentigen.discriminator import Discriminator, DiscriminatorDims, bce_losses
from sentigen.seq2seq import pad_ids

POS = SentimentLabel.POSITIVE
NEG = SentimentLabel.NEGATIVE


def tiny(vocab=9, **kw):
    defaults = dict(emb_dim=3, enc_hidden=3, sent_dim=3, resp_hidden=4, mlp_hidden=4)
    defaults.update(kw)
    return Discriminator(DiscriminatorDims(vocab, **defaults), seed=0)


def example(hist=(5, 6), resp=(7, 5), label=POS):
    return DialogueExample(Utterance(hist), Utterance(resp), label)


class TestScore:
    def test_output_in_open_unit_interval(self):
        d = tiny()
        rng = np.random.default_rng(0)
        for _ in range(20):
            hist = tuple(rng.integers(5, 9, size=rng.integers(1, 6)))
            resp = tuple(rng.integers(5, 9, size=rng.integers(1, 6)))
            s = d.score(hist, POS, resp)
            assert 0.0 < s < 1.0

    def test_deterministic(self):
        d = tiny()
        assert d.score((5, 6), POS, (7,)) == d.score((5, 6), POS, (7,))

    def test_label_flip_changes_score(self):
        d = tiny()
        assert d.score((5, 6), POS, (7, 8)) != d.score((5, 6), NEG, (7, 8))

    def test_empty_inputs_rejected(self):
        d = tiny()
        with pytest.raises(ValueError):
            d.score((), POS, (7,))

    def test_pad_extension_invariance(self):
        # Scoring must ignore padding beyond the sequence end.
        d = tiny()
        hist_ids, hist_mask = pad_ids([(5, 6)])
        resp_ids, resp_mask = pad_ids([(7, 8)])
        base = d.score_batch(hist_ids, hist_mask, np.array([1]), resp_ids, resp_mask).data[0, 0]
        hist_pad = np.concatenate([hist_ids, np.zeros((1, 3), dtype=np.int64)], axis=1)
        hist_pmask = np.concatenate([hist_mask, np.zeros((1, 3))], axis=1)
        resp_pad = np.concatenate([resp_ids, np.zeros((1, 2), dtype=np.int64)], axis=1)
        resp_pmask = np.concatenate([resp_mask, np.zeros((1, 2))], axis=1)
        padded = d.score_batch(hist_pad, hist_pmask, np.array([1]), resp_pad, resp_pmask).data[0, 0]
        assert padded == pytest.approx(base, abs=1e-14)


class TestTrainStep:
    def test_identical_batches_are_inseparable(self):
        d = tiny()
        batch = [example(), example(hist=(6, 7), resp=(8,), label=NEG)]
        triples = [(e.history, e.label, e.response) for e in batch]
        _, accuracy = d.train_step(batch, triples)
        assert accuracy <= 0.5 + 1.0 / len(batch)

    def test_confident_correct_scores_give_tiny_loss(self):
        scores = Tensor(np.array([[1.0 - 1e-9], [1e-9]]))
        loss = bce_losses(scores, np.array([1.0, 0.0])).mean()
        assert float(loss.data) <= 1e-3

    def test_empty_batch_rejected(self):
        d = tiny()
        with pytest.raises(ValueError):
            d.train_step([], [example()])

    def test_bce_gradient_matches_finite_differences(self):
        d = tiny()
        pos = [example(), example(hist=(6, 8), resp=(5, 7))]
        neg = [((5, 6), NEG, (8, 8)), ((7,), POS, (6, 5))]
        hists, labels, resps = d._triples(pos + list(neg))
        hist_ids, hist_mask = pad_ids(hists)
        resp_ids, resp_mask = pad_ids(resps)
        targets = np.array([1.0, 1.0, 0.0, 0.0])
        base = {k: t.data.copy() for k, t in d.params.items()}
        original = d.params

        def loss(params):
            d.params = params
            try:
                scores = d.score_batch(hist_ids, hist_mask, labels, resp_ids, resp_mask)
                return bce_losses(scores, targets).mean()
            finally:
                d.params = original

        assert finite_difference_check(loss, base, eps=1e-6, max_coords_per_param=40) < 1e-4

    def test_training_separates_separable_data(self):
        d = Discriminator(
            DiscriminatorDims(9, emb_dim=3, enc_hidden=3, sent_dim=3, resp_hidden=4, mlp_hidden=4),
            seed=0,
            lr=0.01,
        )
        pos = [example(hist=(5, 6), resp=(7, 7)) for _ in range(8)]
        neg = [((5, 6), POS, (8, 8)) for _ in range(8)]
        for _ in range(80):
            d.train_step(pos, neg)
        assert d.score((5, 6), POS, (7, 7)) > 0.8
        assert d.score((5, 6), POS, (8, 8)) < 0.2


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        d = tiny()
        d.train_step([example()], [((5,), NEG, (6,))])
        path = tmp_path / "d.ckpt"
        d.save(path)
        loaded, _ = Discriminator.load(path)
        assert loaded.score((5, 6), POS, (7,)) == d.score((5, 6), POS, (7,))
        assert loaded.opt.step == d.opt.step
