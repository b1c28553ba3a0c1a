"""Sentiment-context sequence-to-sequence generator.

The dialogue history is encoded with a bidirectional GRU into a context
vector c; the sentiment label is embedded and passed through a small fusion
MLP into a sentiment vector s; their concatenation s_c conditions the
decoder three ways: it initializes the decoder state (through a learned
affine map), it is appended to every decoder input, and it rides along in
the attention query. Decoding uses multiplicative attention over the
encoder states and a softmax over the vocabulary.

Two probability laws coexist here and tests pin both:

* the teacher-forced law: plain softmax over the full vocabulary, response
  followed by EOS. ``teacher_forced_nll`` and the default
  ``sequence_log_prob`` use it.
* the sampling law: what ``sample_response`` actually draws from. PAD and
  BOS are never sampleable, EOS is excluded at the first step (responses are
  never empty), and a sequence that hits ``max_len`` stops without an EOS
  factor. ``sequence_log_prob(..., as_sampled=True, max_len=...)`` scores
  under this law; summed over all possible outputs it is exactly 1, which is
  what the policy-gradient estimator needs to stay unbiased.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, cols, concat, cross_entropy_rows, gather_rows
from .corpus import BOS, EOS, PAD, SentimentLabel, Utterance
from .recurrent import (
    GruParams,
    OptimizerState,
    attention_context,
    gru_step,
    init_uniform,
    init_zeros,
    load_checkpoint,
    save_checkpoint,
)

__all__ = ["GeneratorDims", "Seq2SeqGenerator", "pad_ids", "NEG_MASK"]

NEG_MASK = -1e30


def pad_ids(seqs) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id sequences with PAD; returns (ids (B,T), mask (B,T))."""
    T = max(len(s) for s in seqs)
    ids = np.full((len(seqs), T), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), T), dtype=np.float64)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return ids, mask


class GeneratorDims:
    """Shape configuration; defaults follow the full-scale setup
    (128 per encoder direction, 12-dim sentiment vector, 268-dim decoder)."""

    def __init__(self, vocab_size, emb_dim=128, enc_hidden=128, sent_dim=12,
                 z_dim=0, use_sentiment=True):
        self.vocab_size = vocab_size
        self.emb_dim = emb_dim
        self.enc_hidden = enc_hidden
        self.sent_dim = sent_dim
        self.z_dim = z_dim
        self.use_sentiment = use_sentiment

    @property
    def context_dim(self):
        return 2 * self.enc_hidden

    @property
    def sc_dim(self):
        return self.context_dim + self.sent_dim

    @property
    def cond_dim(self):
        return self.sc_dim + self.z_dim

    @property
    def dec_dim(self):
        return self.sc_dim

    def as_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "emb_dim": self.emb_dim,
            "enc_hidden": self.enc_hidden, "sent_dim": self.sent_dim,
            "z_dim": self.z_dim, "use_sentiment": self.use_sentiment,
        }

    @classmethod
    def from_dict(cls, d) -> "GeneratorDims":
        return cls(**d)


class Seq2SeqGenerator:
    family = "seq2seq"

    def __init__(self, dims: GeneratorDims, seed: int = 0, lr: float = 1e-3):
        self.dims = dims
        rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}
        self._build(rng)
        self.opt = OptimizerState(lr=lr)

    # -- parameters ------------------------------------------------------------

    def _build(self, rng):
        d = self.dims
        p = self.params
        p["emb"] = init_uniform((d.vocab_size, d.emb_dim), rng)
        p.update(GruParams.create(d.emb_dim, d.enc_hidden, rng).named("enc_f"))
        p.update(GruParams.create(d.emb_dim, d.enc_hidden, rng).named("enc_b"))
        p["sent_emb"] = init_uniform((2, d.sent_dim), rng)
        p["sent_w1"] = init_uniform((d.sent_dim, d.sent_dim), rng)
        p["sent_b1"] = init_zeros((d.sent_dim,))
        p["sent_w2"] = init_uniform((d.sent_dim, d.sent_dim), rng)
        p["sent_b2"] = init_zeros((d.sent_dim,))
        p["init_w"] = init_uniform((d.cond_dim, d.dec_dim), rng)
        p["init_b"] = init_zeros((d.dec_dim,))
        p["att_w"] = init_uniform((d.dec_dim + d.cond_dim, d.context_dim), rng)
        p.update(GruParams.create(d.emb_dim + d.cond_dim + d.context_dim, d.dec_dim, rng).named("dec"))
        p["out_w"] = init_uniform((d.dec_dim, d.vocab_size), rng)
        p["out_b"] = init_zeros((d.vocab_size,))

    def _gru(self, prefix) -> GruParams:
        return GruParams.from_named(self.params, prefix)

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def zero_grads(self):
        for t in self.params.values():
            t.grad = None

    def collect_grads(self) -> dict[str, np.ndarray]:
        return {
            k: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for k, t in self.params.items()
        }

    def set_arrays(self, arrays: dict[str, np.ndarray]):
        for k, t in self.params.items():
            t.data[...] = arrays[k]

    # -- conditioning ------------------------------------------------------------

    def _embed_steps(self, ids: np.ndarray) -> list[Tensor]:
        return [gather_rows(self.params["emb"], ids[:, t]) for t in range(ids.shape[1])]

    def _sentiment_batch(self, labels: np.ndarray) -> Tensor:
        if not self.dims.use_sentiment:
            return Tensor(np.zeros((len(labels), self.dims.sent_dim)))
        y_e = gather_rows(self.params["sent_emb"], labels)
        hidden = (y_e @ self.params["sent_w1"] + self.params["sent_b1"]).tanh()
        return hidden @ self.params["sent_w2"] + self.params["sent_b2"]

    def _encode_batch(self, hist_ids, hist_mask):
        from .recurrent import encode_bidirectional

        steps = self._embed_steps(hist_ids)
        return encode_bidirectional(steps, self._gru("enc_f"), self._gru("enc_b"), mask=hist_mask)

    def _sc_batch(self, hist_ids, hist_mask, labels):
        enc_states, c = self._encode_batch(hist_ids, hist_mask)
        s = self._sentiment_batch(labels)
        return enc_states, concat([c, s], axis=1)

    def _cond_batch(self, hist_ids, hist_mask, labels, eps=None):
        """Decoder conditioning vector; the latent-variable subclass widens it."""
        return self._sc_batch(hist_ids, hist_mask, labels)

    # -- decoding ------------------------------------------------------------------

    def _decoder_start(self, cond: Tensor) -> Tensor:
        return cond @ self.params["init_w"] + self.params["init_b"]

    def _decode_step(self, prev_ids, h, cond, enc_states, enc_mask):
        prev = gather_rows(self.params["emb"], prev_ids)
        query = concat([h, cond], axis=1)
        ctx, _ = attention_context(query, enc_states, self.params["att_w"], mask=enc_mask)
        x = concat([prev, cond, ctx], axis=1)
        h_new = gru_step(x, h, self._gru("dec"))
        logits = h_new @ self.params["out_w"] + self.params["out_b"]
        return h_new, logits

    def _decode_nll(self, enc_states, hist_mask, cond, resp_ids, resp_mask):
        """NLL of response + EOS given a conditioning vector.

        Returns (nll (B,1) Tensor, per-step losses (B,T+1) ndarray, step mask).
        """
        B, L = resp_ids.shape
        dec_in = np.concatenate([np.full((B, 1), BOS, dtype=np.int64), resp_ids], axis=1)
        lengths = resp_mask.sum(axis=1).astype(np.int64)
        targets = np.full((B, L + 1), PAD, dtype=np.int64)
        targets[:, :L] = resp_ids
        targets[np.arange(B), lengths] = EOS
        step_mask = np.zeros((B, L + 1))
        for i, n in enumerate(lengths):
            step_mask[i, : n + 1] = 1.0

        h = self._decoder_start(cond)
        total = None
        per_step = np.zeros((B, L + 1))
        for t in range(L + 1):
            h_new, logits = self._decode_step(dec_in[:, t], h, cond, enc_states, hist_mask)
            losses, _ = cross_entropy_rows(logits, targets[:, t])
            m = step_mask[:, t : t + 1]
            masked = losses * Tensor(m)
            total = masked if total is None else total + masked
            per_step[:, t] = losses.data[:, 0] * m[:, 0]
            h = Tensor(m) * h_new + Tensor(1.0 - m) * h
        return total, per_step, step_mask

    def _teacher_forced_losses(self, hist_ids, hist_mask, resp_ids, resp_mask, labels, eps=None):
        enc_states, cond = self._cond_batch(hist_ids, hist_mask, labels, eps=eps)
        return self._decode_nll(enc_states, hist_mask, cond, resp_ids, resp_mask)

    def _sampled_log_prob(self, hist_ids, hist_mask, resp_tokens, labels, max_len, eps=None):
        """Log-probability of given outputs under the sampling law (graph-carrying)."""
        B = len(resp_tokens)
        enc_states, cond = self._cond_batch(hist_ids, hist_mask, labels, eps=eps)
        lengths = np.array([len(t) for t in resp_tokens], dtype=np.int64)
        if lengths.min() < 1:
            raise ValueError("sampled sequences are never empty")
        if lengths.max() > max_len:
            raise ValueError("sequence longer than max_len")
        steps = lengths + (lengths < max_len)  # natural stops spend a step on EOS
        T = int(steps.max())
        dec_in = np.full((B, T), PAD, dtype=np.int64)
        targets = np.full((B, T), PAD, dtype=np.int64)
        step_mask = np.zeros((B, T))
        for i, toks in enumerate(resp_tokens):
            dec_in[i, 0] = BOS
            dec_in[i, 1 : len(toks)] = toks[:-1]
            targets[i, : len(toks)] = toks
            if lengths[i] < max_len:
                dec_in[i, len(toks) : len(toks) + 1] = toks[-1]
                targets[i, len(toks)] = EOS
            step_mask[i, : steps[i]] = 1.0

        h = self._decoder_start(cond)
        total = None
        for t in range(T):
            h_new, logits = self._decode_step(dec_in[:, t], h, cond, enc_states, hist_mask)
            logits = logits + Tensor(self._sampling_logit_mask(t, B))
            losses, _ = cross_entropy_rows(logits, targets[:, t])
            m = step_mask[:, t : t + 1]
            masked = losses * Tensor(m)
            total = masked if total is None else total + masked
            h = Tensor(m) * h_new + Tensor(1.0 - m) * h
        return -total

    def _sampling_logit_mask(self, t: int, batch: int) -> np.ndarray:
        row = np.zeros(self.dims.vocab_size)
        row[PAD] = NEG_MASK
        row[BOS] = NEG_MASK
        if t == 0:
            row[EOS] = NEG_MASK
        return np.tile(row, (batch, 1))

    # -- public single-example surface ----------------------------------------------

    def embed_sentiment(self, label: SentimentLabel) -> np.ndarray:
        return self._sentiment_batch(np.array([label.as_int])).data[0]

    def encode_history(self, history) -> tuple[list[np.ndarray], np.ndarray]:
        ids = np.array([self._tokens(history)], dtype=np.int64)
        states, final = self._encode_batch(ids, np.ones_like(ids, dtype=np.float64))
        return [s.data[0] for s in states], final.data[0]

    def sentiment_context(self, history, label) -> np.ndarray:
        """The conditioning vector s_c = [context; sentiment] for one input."""
        hist_ids, hist_mask = pad_ids([self._tokens(history)])
        _, s_c = self._sc_batch(hist_ids, hist_mask, np.array([label.as_int]))
        return s_c.data[0]

    @staticmethod
    def _tokens(utt) -> tuple[int, ...]:
        return tuple(utt.tokens) if isinstance(utt, Utterance) else tuple(utt)

    def teacher_forced_nll(self, ex) -> tuple[float, list[float]]:
        hist_ids, hist_mask = pad_ids([self._tokens(ex.history)])
        resp_ids, resp_mask = pad_ids([self._tokens(ex.response)])
        labels = np.array([ex.label.as_int])
        total, per_step, step_mask = self._teacher_forced_losses(
            hist_ids, hist_mask, resp_ids, resp_mask, labels
        )
        n = int(step_mask[0].sum())
        return float(total.data[0, 0]), list(per_step[0, :n])

    def sequence_log_prob(self, history, label, response, as_sampled: bool = False,
                          max_len: int | None = None) -> float:
        if not as_sampled:
            from .corpus import DialogueExample

            ex = DialogueExample(
                history if isinstance(history, Utterance) else Utterance(self._tokens(history)),
                response if isinstance(response, Utterance) else Utterance(self._tokens(response)),
                label,
            )
            return -self.teacher_forced_nll(ex)[0]
        if max_len is None:
            raise ValueError("the sampling law needs max_len")
        hist_ids, hist_mask = pad_ids([self._tokens(history)])
        lp = self._sampled_log_prob(
            hist_ids, hist_mask, [self._tokens(response)], np.array([label.as_int]), max_len
        )
        return float(lp.data[0, 0])

    def sample_response(self, history, label, max_len: int = 30, mode: str = "greedy",
                        rng=None, seed: int | None = None, eps: np.ndarray | None = None) -> list[int]:
        """Autoregressive decode; greedy breaks ties toward the lowest id,
        sampling draws from the per-step distribution with the caller's rng."""
        if max_len < 1:
            raise ValueError("max_len must be at least 1")
        if mode not in ("greedy", "sample"):
            raise ValueError(f"unknown decode mode {mode!r}")
        if rng is None:
            rng = np.random.default_rng(seed)
        hist_ids, hist_mask = pad_ids([self._tokens(history)])
        labels = np.array([label.as_int if isinstance(label, SentimentLabel) else int(label)])
        enc_states, cond = self._cond_batch(hist_ids, hist_mask, labels, eps=self._eps_for_sampling(eps, rng))
        h = self._decoder_start(cond)
        out: list[int] = []
        prev = np.array([BOS], dtype=np.int64)
        for t in range(max_len):
            h, logits = self._decode_step(prev, h, cond, enc_states, hist_mask)
            masked = logits.data[0] + self._sampling_logit_mask(t, 1)[0]
            shifted = masked - masked.max()
            probs = np.exp(shifted)
            probs /= probs.sum()
            if mode == "greedy":
                tok = int(np.argmax(probs))
            else:
                # side="right" skips zero-mass (masked) tokens at u == 0; the
                # clamp guards the u > cumsum[-1] float-rounding corner.
                cum = np.cumsum(probs)
                tok = int(min(np.searchsorted(cum, rng.random(), side="right"),
                              len(probs) - 1))
            if tok == EOS:
                break
            out.append(tok)
            prev = np.array([tok], dtype=np.int64)
        return out

    def _eps_for_sampling(self, eps, rng):
        return None  # no latent variable in the base model

    def respond(self, history, label, mode: str = "greedy", seed: int | None = None,
                max_len: int = 30) -> tuple[list[int], float]:
        """Generate and score one response; the pair the service returns."""
        rng = np.random.default_rng(seed)
        eps = self._draw_eps(rng)
        tokens = self.sample_response(history, label, max_len=max_len, mode=mode, rng=rng, eps=eps)
        hist_ids, hist_mask = pad_ids([self._tokens(history)])
        lp = self._sampled_log_prob(
            hist_ids, hist_mask, [tuple(tokens)], np.array([label.as_int]), max_len,
            eps=self._stack_eps([eps]),
        )
        return tokens, float(lp.data[0, 0])

    def _draw_eps(self, rng):
        return None

    def _stack_eps(self, eps_list):
        return None

    # -- persistence -----------------------------------------------------------------

    def save(self, path, extra: dict | None = None) -> None:
        arrays = dict(self.parameter_arrays())
        for k, m in self.opt.m.items():
            arrays[f"adam.m.{k}"] = m
        for k, v in self.opt.v.items():
            arrays[f"adam.v.{k}"] = v
        payload = {
            "dims": self.dims.as_dict(),
            "optimizer": {"lr": self.opt.lr, "step": self.opt.step},
        }
        payload.update(extra or {})
        save_checkpoint(path, self.family, arrays, payload)

    @classmethod
    def _restore_into(cls, model, params, extra):
        arrays = {k: v for k, v in params.items() if not k.startswith("adam.")}
        model.set_arrays(arrays)
        opt = extra.get("optimizer", {})
        model.opt = OptimizerState(lr=opt.get("lr", 1e-3), step=opt.get("step", 0))
        for k, v in params.items():
            if k.startswith("adam.m."):
                model.opt.m[k[len("adam.m."):]] = v
            elif k.startswith("adam.v."):
                model.opt.v[k[len("adam.v."):]] = v
        return model

    @classmethod
    def load(cls, path) -> tuple["Seq2SeqGenerator", dict]:
        family, params, extra = load_checkpoint(path)
        if family != cls.family:
            raise ValueError(f"{path} holds a {family!r} model, expected {cls.family!r}")
        model = cls(GeneratorDims.from_dict(extra["dims"]))
        return cls._restore_into(model, params, extra), extra
