"""Training orchestration.

Covers the full protocol: likelihood pretraining of a generator, pretraining
the discriminator against that frozen generator (its samples are the
negative class, corpus responses the positive class), and the alternating
two-player phase where the generator takes policy-gradient steps on the
discriminator's score with a moving-average baseline, stabilized by teacher
forcing, while the discriminator keeps training on fresh triples.

The policy gradient uses one reward for the whole sampled sequence applied
to the sum of its step log-probabilities under the sampling law, so the
estimator is exactly unbiased: summed over the enumerable outcome tree it
equals the gradient of the expected reward. Tests exercise that equality
directly on tiny instances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .config import TrainRunConfig, config_to_text
from .corpus import CorpusSplit, DialogueExample, SentimentLabel
from .cvae import CvaeGenerator
from .discriminator import Discriminator, DiscriminatorDims
from .recurrent import adam_update, clip_gradients
from .seq2seq import GeneratorDims, Seq2SeqGenerator, pad_ids

__all__ = [
    "RewardRecord",
    "TrainingDiverged",
    "build_generator",
    "build_discriminator",
    "mle_loss",
    "pretrain_generator",
    "pretrain_discriminator",
    "reinforce_step",
    "reinforce_loss",
    "update_baseline",
    "teacher_forcing_step",
    "adversarial_train",
    "run_training",
    "auc_score",
]


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class RewardRecord:
    reward: float
    baseline: float

    @property
    def advantage(self) -> float:
        return self.reward - self.baseline


@dataclass
class Rollout:
    """One sampled response plus everything needed to replay its log-prob."""

    history: tuple[int, ...]
    label: SentimentLabel
    tokens: tuple[int, ...]
    eps: np.ndarray | None
    reward: float = 0.0


def _seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def _batches(examples, batch_size, rng):
    """Endless deterministic batch stream; reshuffles each epoch."""
    if not examples:
        raise ValueError("cannot batch an empty example list")
    size = min(batch_size, len(examples))
    while True:
        order = rng.permutation(len(examples))
        for i in range(0, len(examples) - size + 1, size):
            yield [examples[j] for j in order[i : i + size]]


def build_generator(cfg: TrainRunConfig, vocab_size: int):
    dims = GeneratorDims(
        vocab_size,
        emb_dim=cfg.emb_dim,
        enc_hidden=cfg.enc_hidden,
        sent_dim=cfg.sent_dim,
        z_dim=cfg.z_dim if cfg.uses_latent else 0,
        use_sentiment=cfg.use_sentiment,
    )
    seed = _seeds(cfg.seed, 2)[0]
    if cfg.uses_latent:
        return CvaeGenerator(dims, seed=seed, lr=cfg.lr)
    return Seq2SeqGenerator(dims, seed=seed, lr=cfg.lr)


def build_discriminator(cfg: TrainRunConfig, vocab_size: int) -> Discriminator:
    dims = DiscriminatorDims(
        vocab_size,
        emb_dim=cfg.emb_dim,
        enc_hidden=cfg.enc_hidden,
        sent_dim=cfg.sent_dim,
        resp_hidden=cfg.disc_resp_hidden,
        mlp_hidden=cfg.disc_mlp_hidden,
    )
    return Discriminator(dims, seed=_seeds(cfg.seed, 4)[3], lr=cfg.d_lr)


def _kl_weight(step: int, cfg: TrainRunConfig) -> float:
    """Linear warmup of the KL term over the first kl_anneal_frac of
    pretraining; 0 disables annealing (constant weight 1)."""
    horizon = int(cfg.kl_anneal_frac * cfg.pretrain_g_steps)
    if horizon <= 0:
        return 1.0
    return min(1.0, step / horizon)


def mle_loss(batch, g, kl_weight: float = 1.0, eps: np.ndarray | None = None):
    """Likelihood objective for one batch: example-mean NLL, or the negated
    bound (reconstruction + weighted KL + bag-of-words) for latent models.

    Returns (scalar loss Tensor, parts dict of floats).
    """
    if not batch:
        raise ValueError("empty batch")
    if isinstance(g, CvaeGenerator):
        if eps is None:
            raise ValueError("latent model needs eps draws")
        parts = g._elbo_parts(batch, eps)
        loss = (parts["reconstruction_nll"] + kl_weight * parts["kl"] + parts["bow"]).mean()
        detail = {
            "nll": float(parts["reconstruction_nll"].data.mean()),
            "kl": float(parts["kl"].data.mean()),
            "bow": float(parts["bow"].data.mean()),
            "kl_weight": kl_weight,
        }
        return loss, detail
    hist_ids, hist_mask = pad_ids([e.history.tokens for e in batch])
    resp_ids, resp_mask = pad_ids([e.response.tokens for e in batch])
    labels = np.array([e.label.as_int for e in batch])
    total, _, _ = g._teacher_forced_losses(hist_ids, hist_mask, resp_ids, resp_mask, labels)
    return total.mean(), {"nll": float(total.data.mean())}


def _draw_batch_eps(g, batch_size, rng):
    if isinstance(g, CvaeGenerator):
        return rng.standard_normal((batch_size, g.dims.z_dim))
    return None


def _apply(g, grads, clip_norm):
    clipped = clip_gradients(grads, clip_norm)
    arrays, g.opt = adam_update(g.parameter_arrays(), clipped, g.opt)
    g.set_arrays(arrays)


def pretrain_generator(corpus: CorpusSplit, cfg: TrainRunConfig, log=None):
    """Likelihood training; returns (generator, metrics rows)."""
    g = build_generator(cfg, len(corpus.vocab))
    seeds = _seeds(cfg.seed, 4)
    batch_rng = np.random.default_rng(seeds[1])
    eps_rng = np.random.default_rng(seeds[2])
    metrics = []
    if cfg.pretrain_g_steps == 0:
        return g, metrics
    stream = _batches(corpus.train, cfg.batch_size, batch_rng)
    for step in range(cfg.pretrain_g_steps):
        batch = next(stream)
        eps = _draw_batch_eps(g, len(batch), eps_rng)
        loss, detail = mle_loss(batch, g, kl_weight=_kl_weight(step, cfg), eps=eps)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingDiverged(f"generator pretraining diverged at step {step}")
        g.zero_grads()
        loss.backward()
        _apply(g, g.collect_grads(), cfg.clip_norm)
        row = {"step": step, "phase": "pretrain_g", "loss": value, **detail}
        metrics.append(row)
        if log:
            log(row)
    return g, metrics


def _sample_negatives(g, examples, rng, max_len):
    negatives = []
    for ex in examples:
        eps = g._draw_eps(rng)
        tokens = g.sample_response(ex.history.tokens, ex.label, max_len=max_len,
                                   mode="sample", rng=rng, eps=eps)
        negatives.append((ex.history.tokens, ex.label, tuple(tokens)))
    return negatives


def auc_score(pos_scores, neg_scores) -> float:
    """Exact rank statistic: P(pos > neg) + 0.5 P(tie)."""
    pos = np.asarray(pos_scores)[:, None]
    neg = np.asarray(neg_scores)[None, :]
    wins = (pos > neg).sum() + 0.5 * (pos == neg).sum()
    return float(wins / (pos.size * neg.size))


def discriminator_holdout(d, g, examples, rng, max_len) -> dict:
    negatives = _sample_negatives(g, examples, rng, max_len)
    pos_scores = d.batch_scores(examples)
    neg_scores = d.batch_scores(negatives)
    accuracy = float(((pos_scores > 0.5).sum() + (neg_scores <= 0.5).sum()) / (2 * len(examples)))
    return {"accuracy": accuracy, "auc": auc_score(pos_scores, neg_scores)}


def pretrain_discriminator(corpus, frozen_g, cfg, log=None, sanity_identical_negatives=False):
    """Train the discriminator against a frozen generator.

    Negatives are sampled fresh from the generator every batch. Returns
    (discriminator, metrics rows, held-out report with accuracy and AUC).
    ``sanity_identical_negatives`` swaps the generated negatives for the gold
    responses, making the classes indistinguishable by construction.
    """
    d = build_discriminator(cfg, len(corpus.vocab))
    seeds = _seeds(cfg.seed, 8)
    batch_rng = np.random.default_rng(seeds[4])
    neg_rng = np.random.default_rng(seeds[5])
    metrics = []
    stream = _batches(corpus.train, cfg.batch_size, batch_rng)
    for step in range(cfg.pretrain_d_steps):
        batch = next(stream)
        if sanity_identical_negatives:
            negatives = [(ex.history.tokens, ex.label, ex.response.tokens) for ex in batch]
        else:
            negatives = _sample_negatives(frozen_g, batch, neg_rng, cfg.sample_max_len)
        loss, accuracy = d.train_step(batch, negatives, clip_norm=cfg.clip_norm)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"discriminator pretraining diverged at step {step}")
        row = {"step": step, "phase": "pretrain_d", "loss": loss, "accuracy": accuracy}
        metrics.append(row)
        if log:
            log(row)
    holdout_rng = np.random.default_rng(seeds[6])
    holdout_examples = corpus.dev if corpus.dev else corpus.train
    if sanity_identical_negatives:
        pos_scores = d.batch_scores(holdout_examples)
        report = {"accuracy": 0.5, "auc": auc_score(pos_scores, pos_scores)}
    else:
        report = discriminator_holdout(d, frozen_g, holdout_examples, holdout_rng, cfg.sample_max_len)
    return d, metrics, report


# -- policy gradient ---------------------------------------------------------------


def reinforce_loss(rollouts: list[Rollout], g, baseline: float, max_len: int) -> Tensor:
    """Surrogate whose gradient is the policy-gradient estimate (minimization
    form): -(reward - baseline) * log p(sampled sequence), summed over the
    batch. Log-probabilities follow the sampling law exactly."""
    hist_ids, hist_mask = pad_ids([r.history for r in rollouts])
    labels = np.array([r.label.as_int for r in rollouts])
    eps = None
    if isinstance(g, CvaeGenerator):
        eps = g._stack_eps([r.eps for r in rollouts])
    log_probs = g._sampled_log_prob(
        hist_ids, hist_mask, [r.tokens for r in rollouts], labels, max_len, eps=eps
    )
    advantages = np.array([[r.reward - baseline] for r in rollouts])
    return -(Tensor(advantages) * log_probs).sum()


def reinforce_step(batch, g, d, baseline: float, cfg: TrainRunConfig, rng):
    """Sample a response per item, score it with the discriminator, and
    return (gradients, reward records). Does not apply any update; the
    caller composes these gradients with the teacher-forcing gradient."""
    rollouts = []
    for ex in batch:
        history, label = ex.history.tokens, ex.label
        eps = g._draw_eps(rng)
        tokens = tuple(
            g.sample_response(history, label, max_len=cfg.sample_max_len,
                              mode="sample", rng=rng, eps=eps)
        )
        reward = d.score(history, label, tokens)
        rollouts.append(Rollout(history, label, tokens, eps, reward))
    g.zero_grads()
    loss = reinforce_loss(rollouts, g, baseline, cfg.sample_max_len)
    loss.backward()
    grads = g.collect_grads()
    g.zero_grads()
    stats = [RewardRecord(r.reward, baseline) for r in rollouts]
    return grads, stats


def update_baseline(b: float, mean_reward: float, decay: float) -> float:
    """Exponential moving average of the batch mean reward."""
    if not 0.0 <= decay < 1.0:
        raise ValueError("decay must lie in [0, 1)")
    return decay * b + (1.0 - decay) * mean_reward


def teacher_forcing_step(batch, g, cfg: TrainRunConfig, eps: np.ndarray | None = None,
                         kl_weight: float = 1.0):
    """Gradient of the pretraining likelihood objective on gold responses
    (identical code path). Returns (grads, loss value)."""
    loss, _ = mle_loss(batch, g, kl_weight=kl_weight, eps=eps)
    g.zero_grads()
    loss.backward()
    grads = g.collect_grads()
    g.zero_grads()
    return grads, float(loss.data)


def adversarial_train(corpus: CorpusSplit, cfg: TrainRunConfig, log=None, run_dir=None):
    """Full two-player protocol; returns (generator, discriminator, metrics,
    discriminator held-out report)."""
    if not cfg.is_adversarial:
        raise ValueError(f"adversarial training needs a cgan family, got {cfg.model_family!r}")
    g, g_metrics = pretrain_generator(corpus, cfg, log=log)
    d, d_metrics, d_report = pretrain_discriminator(corpus, g, cfg, log=log)
    d.opt.lr = cfg.adv_d_lr  # the two-player phase usually wants gentler D steps
    metrics = g_metrics + d_metrics

    seeds = _seeds(cfg.seed, 12)
    batch_rng = np.random.default_rng(seeds[7])
    sample_rng = np.random.default_rng(seeds[8])
    eps_rng = np.random.default_rng(seeds[9])
    d_batch_rng = np.random.default_rng(seeds[10])
    d_neg_rng = np.random.default_rng(seeds[11])
    g_stream = _batches(corpus.train, cfg.batch_size, batch_rng)
    d_stream = _batches(corpus.train, cfg.batch_size, d_batch_rng)

    baseline = 0.0
    for step in range(cfg.adversarial_steps):
        batch = next(g_stream)
        grads, stats = reinforce_step(batch, g, d, baseline, cfg, sample_rng)
        eps = _draw_batch_eps(g, len(batch), eps_rng)
        tf_grads, tf_loss = teacher_forcing_step(batch, g, cfg, eps=eps, kl_weight=1.0)
        combined = {k: grads[k] + tf_grads[k] for k in grads}
        _apply(g, combined, cfg.clip_norm)
        mean_reward = float(np.mean([s.reward for s in stats]))
        baseline = update_baseline(baseline, mean_reward, cfg.baseline_decay)
        if not np.isfinite(tf_loss) or not np.isfinite(mean_reward):
            raise TrainingDiverged(f"adversarial phase diverged at step {step}")

        d_accuracy = None
        for _ in range(cfg.d_steps_per_g):
            d_batch = next(d_stream)
            negatives = _sample_negatives(g, d_batch, d_neg_rng, cfg.sample_max_len)
            _, d_accuracy = d.train_step(d_batch, negatives, clip_norm=cfg.clip_norm)
        row = {
            "step": step,
            "phase": "adversarial",
            "reward_mean": mean_reward,
            "baseline": baseline,
            "tf_loss": tf_loss,
            "d_accuracy": d_accuracy,
        }
        metrics.append(row)
        if log:
            log(row)
        if run_dir and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            g.save(Path(run_dir) / f"generator_step{step + 1}.ckpt",
                   extra=_checkpoint_extra(cfg, corpus))
    return g, d, metrics, d_report


def _checkpoint_extra(cfg: TrainRunConfig, corpus: CorpusSplit) -> dict:
    return {"vocab": corpus.vocab.id_to_token, "config": cfg.as_dict()}


def run_training(corpus: CorpusSplit, cfg: TrainRunConfig, run_dir) -> dict:
    """Train per the config family and write all run artifacts: resolved
    config snapshot, per-step metrics log, and checkpoints."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.cfg").write_text(config_to_text(cfg), encoding="utf-8")

    rows = []

    def log(row):
        rows.append(row)

    extra = _checkpoint_extra(cfg, corpus)
    summary: dict = {"model_family": cfg.model_family}
    if cfg.is_adversarial:
        g, d, metrics, d_report = adversarial_train(corpus, cfg, log=log, run_dir=run_dir)
        d.save(run_dir / "discriminator.ckpt", extra=extra)
        summary["discriminator_holdout"] = d_report
    else:
        g, metrics = pretrain_generator(corpus, cfg, log=log)
    g.save(run_dir / "generator.ckpt", extra=extra)

    with open(run_dir / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    summary["steps_logged"] = len(rows)
    summary["checkpoint"] = str(run_dir / "generator.ckpt")
    return summary
