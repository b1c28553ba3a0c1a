import math

import numpy as np
import pytest

from sentigen.autodiff import Tensor, finite_difference_check
from sentigen.corpus import DialogueExample, SentimentLabel, Utterance
from sentigen.cvae import CvaeGenerator, DiagGaussian, kl_diag_gauss, reparameterize
from sentigen.seq2seq import GeneratorDims, Seq2SeqGenerator, pad_ids

POS = SentimentLabel.POSITIVE
NEG = SentimentLabel.NEGATIVE


def tiny(vocab=9, z_dim=2, **kw):
    defaults = dict(emb_dim=3, enc_hidden=3, sent_dim=3, z_dim=z_dim)
    defaults.update(kw)
    return CvaeGenerator(GeneratorDims(vocab, **defaults), seed=0)


def example(hist=(5, 6), resp=(7, 5), label=POS):
    return DialogueExample(Utterance(hist), Utterance(resp), label)


class TestRecognitionPrior:
    def test_recognition_deterministic_and_shaped(self):
        g = tiny(z_dim=3)
        q1 = g.recognition(example())
        q2 = g.recognition(example())
        np.testing.assert_array_equal(q1.mu.data, q2.mu.data)
        assert q1.mu.data.shape == (1, 3)
        assert q1.logvar.data.shape == (1, 3)

    def test_logvar_clamped_under_huge_inputs(self):
        g = tiny(z_dim=3)
        g.params["rec_w2"].data[...] *= 1e6
        q = g.recognition(example())
        assert np.all(q.logvar.data <= 20.0)
        assert np.all(q.logvar.data >= -20.0)

    def test_prior_sees_only_conditioning(self):
        g = tiny(z_dim=3)
        p1 = g.prior((5, 6), POS)
        p2 = g.prior((5, 6), POS)
        np.testing.assert_array_equal(p1.mu.data, p2.mu.data)
        # different response, same history and label: recognition moves, prior cannot
        q1 = g.recognition(example(resp=(7, 5)))
        q2 = g.recognition(example(resp=(8, 6, 7)))
        assert not np.array_equal(q1.mu.data, q2.mu.data)


class TestReparameterize:
    def test_zero_noise_returns_mean(self):
        d = DiagGaussian(Tensor(np.array([[1.0, -2.0]])), Tensor(np.array([[0.3, -0.7]])))
        z = reparameterize(d, np.zeros((1, 2)))
        np.testing.assert_array_equal(z.data, d.mu.data)

    def test_unit_variance_adds_noise(self):
        d = DiagGaussian(Tensor(np.array([[1.0, -2.0]])), Tensor(np.zeros((1, 2))))
        eps = np.array([[0.5, -1.5]])
        z = reparameterize(d, eps)
        np.testing.assert_allclose(z.data, d.mu.data + eps)

    def test_monte_carlo_moments(self):
        rng = np.random.default_rng(0)
        mu = np.array([[0.7, -1.2, 0.1]])
        logvar = np.array([[0.4, -0.8, 0.0]])
        d = DiagGaussian(Tensor(mu), Tensor(logvar))
        n = 10_000
        draws = np.stack([
            reparameterize(d, rng.standard_normal((1, 3))).data[0] for _ in range(n)
        ])
        sigma = np.exp(0.5 * logvar[0])
        band = 4.0 * sigma / math.sqrt(n)
        assert np.all(np.abs(draws.mean(axis=0) - mu[0]) < band)


class TestKl:
    def test_identical_distributions_zero(self):
        d = DiagGaussian(Tensor(np.array([[0.3, -0.4]])), Tensor(np.array([[0.1, 0.2]])))
        assert float(kl_diag_gauss(d, d).data[0, 0]) == 0.0

    def test_unit_shift_closed_form(self):
        q = DiagGaussian(Tensor(np.array([[1.0]])), Tensor(np.array([[0.0]])))
        p = DiagGaussian(Tensor(np.array([[0.0]])), Tensor(np.array([[0.0]])))
        assert float(kl_diag_gauss(q, p).data[0, 0]) == pytest.approx(0.5, abs=1e-12)

    def test_nonnegative_over_random_pairs(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            q = DiagGaussian(Tensor(rng.normal(size=(1, 4))), Tensor(rng.uniform(-3, 3, size=(1, 4))))
            p = DiagGaussian(Tensor(rng.normal(size=(1, 4))), Tensor(rng.uniform(-3, 3, size=(1, 4))))
            assert float(kl_diag_gauss(q, p).data[0, 0]) >= -1e-12

    def test_dimension_mismatch_rejected(self):
        q = DiagGaussian(Tensor(np.zeros((1, 2))), Tensor(np.zeros((1, 2))))
        p = DiagGaussian(Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 3))))
        with pytest.raises(ValueError):
            kl_diag_gauss(q, p)


class TestBagOfWords:
    def test_order_invariance(self):
        g = tiny()
        z = np.array([0.25, -0.5])
        s_c = g.sentiment_context((5, 6), POS)
        a = g.bow_loss(z, s_c, (7, 5, 8))
        b = g.bow_loss(z, s_c, (8, 7, 5))
        assert a == pytest.approx(b, abs=1e-12)

    def test_uniform_logits_value(self):
        g = tiny(vocab=9)
        g.params["bow_w"].data[...] = 0.0
        g.params["bow_b"].data[...] = 0.0
        loss = g.bow_loss(np.zeros(2), g.sentiment_context((5,), POS), (7, 5, 8))
        assert loss == pytest.approx(3 * math.log(9), abs=1e-9)

    def test_gradient_matches_finite_differences(self):
        g = tiny()
        ex = example()
        eps = np.array([[0.3, -0.6]])
        base = {k: t.data.copy() for k, t in g.params.items()}
        original = g.params

        def loss(params):
            g.params = params
            try:
                return g._elbo_parts([ex], eps)["bow"].sum()
            finally:
                g.params = original

        assert finite_difference_check(loss, base, eps=1e-6, max_coords_per_param=40) < 1e-4


class TestElbo:
    def test_total_is_weighted_sum_of_parts(self):
        g = tiny()
        eps = np.array([[0.1, 0.2]])
        for w in (0.0, 0.37, 1.0):
            total, parts = g.elbo_step(example(), eps, kl_weight=w)
            expected = parts["reconstruction_nll"] + w * parts["kl"] + parts["bow"]
            assert total == pytest.approx(expected, abs=1e-9)

    def test_kl_part_matches_direct_computation(self):
        g = tiny()
        ex = example()
        _, parts = g.elbo_step(ex, np.array([[0.1, 0.2]]))
        q = g.recognition(ex)
        p = g.prior(ex.history, ex.label)
        assert parts["kl"] == pytest.approx(float(kl_diag_gauss(q, p).data[0, 0]), abs=1e-9)

    def test_bound_dominates_reconstruction_at_full_weight(self):
        g = tiny()
        total, parts = g.elbo_step(example(), np.array([[0.4, -0.2]]), kl_weight=1.0)
        assert total - parts["bow"] >= parts["reconstruction_nll"] - 1e-9

    def test_gradient_flows_through_recognition(self):
        g = tiny()
        ex = example()
        eps = np.array([[0.5, -0.3]])
        rec_names = [k for k in g.params if k.startswith(("rec_", "resp_"))]
        base = {k: g.params[k].data.copy() for k in rec_names}
        original = g.params

        def loss(params):
            merged = dict(original)
            merged.update(params)
            g.params = merged
            try:
                parts = g._elbo_parts([ex], eps)
                return (parts["reconstruction_nll"] + parts["kl"] + parts["bow"]).sum()
            finally:
                g.params = original

        live = {k: Tensor(v.copy(), requires_grad=True) for k, v in base.items()}
        merged = dict(g.params)
        merged.update(live)
        g.params = merged
        try:
            parts = g._elbo_parts([ex], eps)
            (parts["reconstruction_nll"] + parts["kl"] + parts["bow"]).sum().backward()
        finally:
            g.params = original
        assert any(np.abs(t.grad).max() > 1e-8 for t in live.values() if t.grad is not None)
        assert finite_difference_check(loss, base, eps=1e-6, max_coords_per_param=40) < 1e-4


class TestDegenerateBridge:
    def test_zero_latent_reduces_to_base_model_plus_bow(self):
        base = Seq2SeqGenerator(GeneratorDims(9, emb_dim=3, enc_hidden=3, sent_dim=3), seed=4)
        cv = tiny(vocab=9, z_dim=0)
        for name, t in base.params.items():
            cv.params[name].data[...] = t.data
        ex = example(hist=(5, 6, 8), resp=(7, 5))
        total, parts = cv.elbo_step(ex, np.zeros((1, 0)), kl_weight=1.0)
        nll, _ = base.teacher_forced_nll(ex)
        assert parts["kl"] == 0.0
        assert parts["reconstruction_nll"] == pytest.approx(nll, abs=1e-9)
        assert total == pytest.approx(nll + parts["bow"], abs=1e-9)


class TestGenerate:
    def test_seeded_determinism(self):
        g = tiny()
        assert g.generate((5, 6), POS, max_len=6, seed=9) == g.generate((5, 6), POS, max_len=6, seed=9)

    def test_signature_excludes_gold_response(self):
        import inspect

        names = inspect.signature(CvaeGenerator.generate).parameters
        assert "response" not in names and "gold" not in names

    def test_checkpoint_roundtrip(self, tmp_path):
        g = tiny()
        path = tmp_path / "cvae.ckpt"
        g.save(path)
        loaded, _ = CvaeGenerator.load(path)
        assert loaded.generate((5, 6), POS, seed=2) == g.generate((5, 6), POS, seed=2)
