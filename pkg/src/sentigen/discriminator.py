"""Conditional discriminator: does (history, sentiment, response) look human?

Two encoders feed an MLP. The history side mirrors the generator (bi-GRU
context vector plus sentiment fusion, giving its own sentiment-context
vector); the response encoder is a unidirectional GRU whose initial state is
a learned affine image of that vector, so the response reading is
conditioned on history and label from the first step. The final score is a
sigmoid over an MLP of [response vector; sentiment context]. No parameters
are shared with any generator.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat, gather_rows
from .corpus import SentimentLabel, Utterance
from .recurrent import (
    GruParams,
    OptimizerState,
    adam_update,
    clip_gradients,
    encode_bidirectional,
    gru_step,
    init_uniform,
    init_zeros,
    load_checkpoint,
    save_checkpoint,
)
from .seq2seq import pad_ids

__all__ = ["DiscriminatorDims", "Discriminator", "bce_losses"]


class DiscriminatorDims:
    def __init__(self, vocab_size, emb_dim=128, enc_hidden=128, sent_dim=12,
                 resp_hidden=128, mlp_hidden=64):
        self.vocab_size = vocab_size
        self.emb_dim = emb_dim
        self.enc_hidden = enc_hidden
        self.sent_dim = sent_dim
        self.resp_hidden = resp_hidden
        self.mlp_hidden = mlp_hidden

    @property
    def sc_dim(self):
        return 2 * self.enc_hidden + self.sent_dim

    def as_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "emb_dim": self.emb_dim,
            "enc_hidden": self.enc_hidden, "sent_dim": self.sent_dim,
            "resp_hidden": self.resp_hidden, "mlp_hidden": self.mlp_hidden,
        }

    @classmethod
    def from_dict(cls, d) -> "DiscriminatorDims":
        return cls(**d)


def bce_losses(scores: Tensor, labels: np.ndarray) -> Tensor:
    """Per-row binary cross-entropy; scores in (0,1), labels in {0,1}."""
    y = Tensor(labels.reshape(-1, 1).astype(np.float64))
    return -(y * scores.log() + (1.0 - y) * (1.0 - scores).log())


class Discriminator:
    family = "discriminator"

    def __init__(self, dims: DiscriminatorDims, seed: int = 0, lr: float = 1e-3):
        self.dims = dims
        rng = np.random.default_rng(seed)
        p: dict[str, Tensor] = {}
        p["emb"] = init_uniform((dims.vocab_size, dims.emb_dim), rng)
        p.update(GruParams.create(dims.emb_dim, dims.enc_hidden, rng).named("hist_f"))
        p.update(GruParams.create(dims.emb_dim, dims.enc_hidden, rng).named("hist_b"))
        p["sent_emb"] = init_uniform((2, dims.sent_dim), rng)
        p["sent_w1"] = init_uniform((dims.sent_dim, dims.sent_dim), rng)
        p["sent_b1"] = init_zeros((dims.sent_dim,))
        p["sent_w2"] = init_uniform((dims.sent_dim, dims.sent_dim), rng)
        p["sent_b2"] = init_zeros((dims.sent_dim,))
        p["resp_init_w"] = init_uniform((dims.sc_dim, dims.resp_hidden), rng)
        p["resp_init_b"] = init_zeros((dims.resp_hidden,))
        p.update(GruParams.create(dims.emb_dim, dims.resp_hidden, rng).named("resp"))
        p["mlp_w1"] = init_uniform((dims.resp_hidden + dims.sc_dim, dims.mlp_hidden), rng)
        p["mlp_b1"] = init_zeros((dims.mlp_hidden,))
        p["mlp_w2"] = init_uniform((dims.mlp_hidden, 1), rng)
        p["mlp_b2"] = init_zeros((1,))
        self.params = p
        self.opt = OptimizerState(lr=lr)

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

    def set_arrays(self, arrays):
        for k, t in self.params.items():
            t.data[...] = arrays[k]

    # -- scoring --------------------------------------------------------------

    def _sentiment_batch(self, labels) -> Tensor:
        y_e = gather_rows(self.params["sent_emb"], labels)
        hidden = (y_e @ self.params["sent_w1"] + self.params["sent_b1"]).tanh()
        return hidden @ self.params["sent_w2"] + self.params["sent_b2"]

    def score_batch(self, hist_ids, hist_mask, labels, resp_ids, resp_mask) -> Tensor:
        emb = self.params["emb"]
        hist_steps = [gather_rows(emb, hist_ids[:, t]) for t in range(hist_ids.shape[1])]
        _, c = encode_bidirectional(hist_steps, self._gru("hist_f"), self._gru("hist_b"), mask=hist_mask)
        s_c = concat([c, self._sentiment_batch(labels)], axis=1)
        h = s_c @ self.params["resp_init_w"] + self.params["resp_init_b"]
        resp = self._gru("resp")
        for t in range(resp_ids.shape[1]):
            x = gather_rows(emb, resp_ids[:, t])
            h_new = gru_step(x, h, resp)
            m = resp_mask[:, t : t + 1]
            h = Tensor(m) * h_new + Tensor(1.0 - m) * h
        hidden = (concat([h, s_c], axis=1) @ self.params["mlp_w1"] + self.params["mlp_b1"]).tanh()
        return (hidden @ self.params["mlp_w2"] + self.params["mlp_b2"]).sigmoid()

    def score(self, history, sentiment, response) -> float:
        """Probability that the triple is human-authored."""
        hist = self._tokens(history)
        resp = self._tokens(response)
        if not hist or not resp:
            raise ValueError("history and response must be nonempty")
        hist_ids, hist_mask = pad_ids([hist])
        resp_ids, resp_mask = pad_ids([resp])
        label = sentiment.as_int if isinstance(sentiment, SentimentLabel) else int(sentiment)
        out = self.score_batch(hist_ids, hist_mask, np.array([label]), resp_ids, resp_mask)
        return float(out.data[0, 0])

    @staticmethod
    def _tokens(utt):
        return tuple(utt.tokens) if isinstance(utt, Utterance) else tuple(utt)

    # -- training -------------------------------------------------------------

    def _triples(self, items):
        hists, labels, resps = [], [], []
        for item in items:
            if hasattr(item, "history"):
                hists.append(self._tokens(item.history))
                labels.append(item.label.as_int)
                resps.append(self._tokens(item.response))
            else:
                h, y, r = item
                hists.append(self._tokens(h))
                labels.append(y.as_int if isinstance(y, SentimentLabel) else int(y))
                resps.append(self._tokens(r))
        return hists, np.array(labels), resps

    def batch_scores(self, items) -> np.ndarray:
        hists, labels, resps = self._triples(items)
        hist_ids, hist_mask = pad_ids(hists)
        resp_ids, resp_mask = pad_ids(resps)
        return self.score_batch(hist_ids, hist_mask, labels, resp_ids, resp_mask).data[:, 0]

    def train_step(self, pos, neg, clip_norm: float = 5.0) -> tuple[float, float]:
        """One clipped Adam step of binary cross-entropy.

        Human triples carry label 1, generated ones 0. Returns (mean loss,
        batch accuracy at the 0.5 threshold).
        """
        if not pos or not neg:
            raise ValueError("both batches must be nonempty")
        hists, labels, resps = self._triples(list(pos) + list(neg))
        hist_ids, hist_mask = pad_ids(hists)
        resp_ids, resp_mask = pad_ids(resps)
        scores = self.score_batch(hist_ids, hist_mask, labels, resp_ids, resp_mask)
        targets = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        loss = bce_losses(scores, targets).mean()
        self.zero_grads()
        loss.backward()
        grads = clip_gradients(self.collect_grads(), clip_norm)
        new_arrays, self.opt = adam_update(self.parameter_arrays(), grads, self.opt)
        self.set_arrays(new_arrays)
        predictions = scores.data[:, 0] > 0.5
        accuracy = float(np.mean(predictions == (targets > 0.5)))
        return float(loss.data), accuracy

    # -- persistence ------------------------------------------------------------

    def save(self, path, extra: dict | None = None) -> None:
        arrays = dict(self.parameter_arrays())
        for k, m in self.opt.m.items():
            arrays[f"adam.m.{k}"] = m
        for k, v in self.opt.v.items():
            arrays[f"adam.v.{k}"] = v
        payload = {"dims": self.dims.as_dict(), "optimizer": {"lr": self.opt.lr, "step": self.opt.step}}
        payload.update(extra or {})
        save_checkpoint(path, self.family, arrays, payload)

    @classmethod
    def load(cls, path) -> tuple["Discriminator", dict]:
        family, params, extra = load_checkpoint(path)
        if family != cls.family:
            raise ValueError(f"{path} holds a {family!r} model, expected {cls.family!r}")
        model = cls(DiscriminatorDims.from_dict(extra["dims"]))
        model.set_arrays({k: v for k, v in params.items() if not k.startswith("adam.")})
        opt = extra.get("optimizer", {})
        model.opt = OptimizerState(lr=opt.get("lr", 1e-3), step=opt.get("step", 0))
        for k, v in params.items():
            if k.startswith("adam.m."):
                model.opt.m[k[len("adam.m."):]] = v
            elif k.startswith("adam.v."):
                model.opt.v[k[len("adam.v."):]] = v
        return model, extra
