"""Latent-variable (conditional VAE) variant of the sentiment generator.

Adds a bidirectional response encoder, a recognition network
q(z | response, s_c) used at training time, a prior network p(z | s_c) used
at generation time, reparameterized sampling, the closed-form diagonal
Gaussian KL, and an order-free bag-of-words auxiliary loss that counters
posterior collapse. The decoder is conditioned on concat(s_c, z) everywhere
the base model used s_c alone, so a z_dim of 0 degenerates exactly to the
base model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, cols, concat, cross_entropy_rows
from .recurrent import GruParams, encode_bidirectional, init_uniform, init_zeros
from .seq2seq import GeneratorDims, Seq2SeqGenerator, pad_ids

__all__ = ["DiagGaussian", "CvaeGenerator", "kl_diag_gauss", "reparameterize"]

LOGVAR_LIMIT = 20.0


@dataclass
class DiagGaussian:
    """Diagonal Gaussian as (mu, logvar) tensors; logvar is clamped to
    [-LOGVAR_LIMIT, LOGVAR_LIMIT] by the networks that produce it."""

    mu: Tensor
    logvar: Tensor


def reparameterize(d: DiagGaussian, eps) -> Tensor:
    """z = mu + exp(logvar / 2) * eps; eps comes from the caller, keeping
    this a pure function."""
    eps = eps if isinstance(eps, Tensor) else Tensor(np.asarray(eps, dtype=np.float64))
    return d.mu + (d.logvar * 0.5).exp() * eps


def kl_diag_gauss(q: DiagGaussian, p: DiagGaussian) -> Tensor:
    """Closed-form KL(q || p) between diagonal Gaussians, summed over
    dimensions. Row-wise for (B, z) inputs, scalar for 1-D inputs."""
    if q.mu.data.shape != p.mu.data.shape:
        raise ValueError("KL needs equal dimensions")
    var_ratio = (q.logvar - p.logvar).exp()
    delta2 = (q.mu - p.mu) ** 2.0 / p.logvar.exp()
    inner = p.logvar - q.logvar + var_ratio + delta2 - 1.0
    axis = 1 if q.mu.data.ndim == 2 else None
    return inner.sum(axis=axis, keepdims=q.mu.data.ndim == 2) * 0.5


class CvaeGenerator(Seq2SeqGenerator):
    family = "cvae"

    def __init__(self, dims: GeneratorDims, seed: int = 0, lr: float = 1e-3):
        super().__init__(dims, seed=seed, lr=lr)

    def _build(self, rng):
        super()._build(rng)
        d = self.dims
        p = self.params
        p.update(GruParams.create(d.emb_dim, d.enc_hidden, rng).named("resp_f"))
        p.update(GruParams.create(d.emb_dim, d.enc_hidden, rng).named("resp_b"))
        z2 = max(2 * d.z_dim, 1)  # keep degenerate z_dim=0 networks constructible
        p["rec_w1"] = init_uniform((d.context_dim + d.sc_dim, z2), rng)
        p["rec_b1"] = init_zeros((z2,))
        p["rec_w2"] = init_uniform((z2, 2 * d.z_dim), rng)
        p["rec_b2"] = init_zeros((2 * d.z_dim,))
        p["pri_w1"] = init_uniform((d.sc_dim, z2), rng)
        p["pri_b1"] = init_zeros((z2,))
        p["pri_w2"] = init_uniform((z2, 2 * d.z_dim), rng)
        p["pri_b2"] = init_zeros((2 * d.z_dim,))
        p["bow_w"] = init_uniform((d.z_dim + d.sc_dim, d.vocab_size), rng)
        p["bow_b"] = init_zeros((d.vocab_size,))

    # -- latent networks ---------------------------------------------------------

    def _mlp_gaussian(self, x: Tensor, prefix: str) -> DiagGaussian:
        hidden = (x @ self.params[f"{prefix}_w1"] + self.params[f"{prefix}_b1"]).tanh()
        packed = hidden @ self.params[f"{prefix}_w2"] + self.params[f"{prefix}_b2"]
        z = self.dims.z_dim
        return DiagGaussian(
            mu=cols(packed, 0, z),
            logvar=cols(packed, z, 2 * z).clamp(-LOGVAR_LIMIT, LOGVAR_LIMIT),
        )

    def _encode_response(self, resp_ids, resp_mask) -> Tensor:
        steps = self._embed_steps(resp_ids)
        _, final = encode_bidirectional(steps, self._gru("resp_f"), self._gru("resp_b"), mask=resp_mask)
        return final

    def recognition_batch(self, s_c: Tensor, resp_ids, resp_mask) -> DiagGaussian:
        resp_vec = self._encode_response(resp_ids, resp_mask)
        return self._mlp_gaussian(concat([resp_vec, s_c], axis=1), "rec")

    def prior_batch(self, s_c: Tensor) -> DiagGaussian:
        return self._mlp_gaussian(s_c, "pri")

    def recognition(self, ex) -> DiagGaussian:
        """q(z | response, s_c) for one example."""
        hist_ids, hist_mask = pad_ids([self._tokens(ex.history)])
        resp_ids, resp_mask = pad_ids([self._tokens(ex.response)])
        _, s_c = self._sc_batch(hist_ids, hist_mask, np.array([ex.label.as_int]))
        return self.recognition_batch(s_c, resp_ids, resp_mask)

    def prior(self, history, label) -> DiagGaussian:
        hist_ids, hist_mask = pad_ids([self._tokens(history)])
        _, s_c = self._sc_batch(hist_ids, hist_mask, np.array([label.as_int]))
        return self.prior_batch(s_c)

    # -- conditioning with the latent ----------------------------------------------

    def _cond_batch(self, hist_ids, hist_mask, labels, eps=None):
        enc_states, s_c = self._sc_batch(hist_ids, hist_mask, labels)
        if eps is None:
            raise ValueError("latent model needs eps to build its conditioning")
        z = reparameterize(self.prior_batch(s_c), eps)
        return enc_states, concat([s_c, z], axis=1)

    def _eps_for_sampling(self, eps, rng):
        if eps is not None:
            return np.asarray(eps, dtype=np.float64).reshape(1, self.dims.z_dim)
        return rng.standard_normal((1, self.dims.z_dim))

    def _draw_eps(self, rng):
        return rng.standard_normal((1, self.dims.z_dim))

    def _stack_eps(self, eps_list):
        return np.concatenate([np.asarray(e).reshape(1, self.dims.z_dim) for e in eps_list], axis=0)

    # -- losses ------------------------------------------------------------------------

    def bow_logits(self, z: Tensor, s_c: Tensor) -> Tensor:
        return concat([z, s_c], axis=1) @ self.params["bow_w"] + self.params["bow_b"]

    def _bow_losses(self, z, s_c, resp_ids, resp_mask) -> Tensor:
        logits = self.bow_logits(z, s_c)
        total = None
        for t in range(resp_ids.shape[1]):
            losses, _ = cross_entropy_rows(logits, resp_ids[:, t])
            masked = losses * Tensor(resp_mask[:, t : t + 1])
            total = masked if total is None else total + masked
        return total

    def bow_loss(self, z, s_c, response) -> float:
        """Order-free token reconstruction from (z, s_c): one softmax scored
        against every response token, so permuting the response is a no-op."""
        z = Tensor(np.asarray(z, dtype=np.float64).reshape(1, -1))
        s_c = Tensor(np.asarray(s_c, dtype=np.float64).reshape(1, -1))
        resp_ids, resp_mask = pad_ids([self._tokens(response)])
        return float(self._bow_losses(z, s_c, resp_ids, resp_mask).data[0, 0])

    def _elbo_parts(self, examples, eps: np.ndarray) -> dict[str, Tensor]:
        """Batched negated-bound pieces: reconstruction NLL, KL, bag-of-words.

        z is drawn from the recognition network via the supplied eps; the
        decoder consumes concat(s_c, z).
        """
        hist_ids, hist_mask = pad_ids([self._tokens(e.history) for e in examples])
        resp_ids, resp_mask = pad_ids([self._tokens(e.response) for e in examples])
        labels = np.array([e.label.as_int for e in examples])
        enc_states, s_c = self._sc_batch(hist_ids, hist_mask, labels)
        q = self.recognition_batch(s_c, resp_ids, resp_mask)
        p = self.prior_batch(s_c)
        z = reparameterize(q, eps)
        cond = concat([s_c, z], axis=1)
        recon, _, _ = self._decode_nll(enc_states, hist_mask, cond, resp_ids, resp_mask)
        kl = kl_diag_gauss(q, p)
        bow = self._bow_losses(z, s_c, resp_ids, resp_mask)
        return {"reconstruction_nll": recon, "kl": kl, "bow": bow}

    def elbo_step(self, ex, eps, kl_weight: float = 1.0) -> tuple[float, dict[str, float]]:
        """Single-example negated lower bound plus bag-of-words loss."""
        eps = np.asarray(eps, dtype=np.float64).reshape(1, self.dims.z_dim)
        parts = self._elbo_parts([ex], eps)
        values = {k: float(v.data[0, 0]) for k, v in parts.items()}
        total = values["reconstruction_nll"] + kl_weight * values["kl"] + values["bow"]
        return total, values

    # -- generation -----------------------------------------------------------------

    def generate(self, history, label, max_len: int = 30, seed: int | None = 0,
                 mode: str = "greedy") -> list[int]:
        """Draw z from the prior (seeded) and decode; never sees a gold response."""
        rng = np.random.default_rng(seed)
        eps = self._draw_eps(rng)
        return self.sample_response(history, label, max_len=max_len, mode=mode, rng=rng, eps=eps)
