"""Training run configuration.

A run is fully described by a flat key = value text file; together with the
corpus bytes and the seed it determines every reported metric bit-for-bit in
64-bit single-threaded mode. Unknown keys are rejected by name, parsing is
typed off the dataclass field annotations, and the resolved config is
serialized next to every checkpoint.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

__all__ = ["TrainRunConfig", "ConfigError", "parse_config", "parse_config_text", "config_to_text"]

FAMILIES = ("seq2seq", "cvae", "cgan", "cgan-cvae")


class ConfigError(ValueError):
    pass


@dataclass
class TrainRunConfig:
    model_family: str = "seq2seq"
    corpus: str = "synthetic:2000:7"
    seed: int = 7

    # generator dimensions (full-scale defaults: 128/direction encoder,
    # 12-dim sentiment vector, 268-dim decoder)
    emb_dim: int = 128
    enc_hidden: int = 128
    sent_dim: int = 12
    z_dim: int = 16
    use_sentiment: bool = True

    # discriminator dimensions
    disc_resp_hidden: int = 128
    disc_mlp_hidden: int = 64

    # optimization
    lr: float = 1e-3
    d_lr: float = 1e-3          # discriminator pretraining
    adv_d_lr: float = 1e-3      # discriminator updates during the adversarial phase
    clip_norm: float = 5.0
    batch_size: int = 32
    pretrain_g_steps: int = 600
    pretrain_d_steps: int = 200
    adversarial_steps: int = 200
    d_steps_per_g: int = 1
    baseline_decay: float = 0.9
    kl_anneal_frac: float = 0.2

    # data handling
    max_len: int = 30
    sample_max_len: int = 12
    max_vocab: int = 10000
    min_count: int = 1

    checkpoint_every: int = 0

    def validate(self) -> "TrainRunConfig":
        if self.model_family not in FAMILIES:
            raise ConfigError(f"model_family must be one of {FAMILIES}, got {self.model_family!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ConfigError("baseline_decay must lie in [0, 1)")
        if not 0.0 <= self.kl_anneal_frac <= 1.0:
            raise ConfigError("kl_anneal_frac must lie in [0, 1]")
        if self.sample_max_len < 1:
            raise ConfigError("sample_max_len must be at least 1")
        for name in ("pretrain_g_steps", "pretrain_d_steps", "adversarial_steps", "d_steps_per_g"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        return self

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def uses_latent(self) -> bool:
        return self.model_family in ("cvae", "cgan-cvae")

    @property
    def is_adversarial(self) -> bool:
        return self.model_family in ("cgan", "cgan-cvae")


_FIELDS = {f.name: f for f in dataclasses.fields(TrainRunConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELDS[key].type
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {kind}") from None


def parse_config_text(text: str) -> TrainRunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    return TrainRunConfig(**values).validate()


def parse_config(path) -> TrainRunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def config_to_text(cfg: TrainRunConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in dataclasses.fields(TrainRunConfig)]
    return "\n".join(lines) + "\n"
