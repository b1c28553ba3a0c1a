"""Recurrent building blocks: GRU cells, bidirectional encoding, attention,
losses, gradient clipping, Adam, and the checkpoint container format.

All functions are pure with respect to their inputs; training loops own the
single-writer discipline for parameter and optimizer state.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, cols, concat, cross_entropy_rows, masked_softmax

__all__ = [
    "GruParams",
    "OptimizerState",
    "ShapeError",
    "gru_step",
    "encode_bidirectional",
    "attention_context",
    "softmax_cross_entropy",
    "clip_gradients",
    "adam_update",
    "init_uniform",
    "save_checkpoint",
    "load_checkpoint",
]

INIT_SCALE = 0.08


class ShapeError(ValueError):
    pass


def init_uniform(shape, rng: np.random.Generator, scale: float = INIT_SCALE, dtype=np.float64) -> Tensor:
    return Tensor(rng.uniform(-scale, scale, size=shape).astype(dtype), requires_grad=True)


def init_zeros(shape, dtype=np.float64) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


@dataclass
class GruParams:
    """Weights for one GRU cell: update gate z, reset gate r, candidate c."""

    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_c: Tensor
    u_c: Tensor
    b_c: Tensor

    @classmethod
    def create(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator, dtype=np.float64) -> "GruParams":
        def w():
            return init_uniform((input_dim, hidden_dim), rng, dtype=dtype)

        def u():
            return init_uniform((hidden_dim, hidden_dim), rng, dtype=dtype)

        def b():
            return init_zeros((hidden_dim,), dtype=dtype)

        return cls(w(), u(), b(), w(), u(), b(), w(), u(), b())

    @property
    def input_dim(self) -> int:
        return self.w_z.data.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.u_z.data.shape[0]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.{name}": getattr(self, name)
            for name in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_c", "u_c", "b_c")
        }

    @classmethod
    def from_named(cls, params: dict[str, Tensor], prefix: str) -> "GruParams":
        return cls(*[params[f"{prefix}.{n}"] for n in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_c", "u_c", "b_c")])


def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _as_row(t: Tensor) -> Tensor:
    """View a (d,) tensor as (1, d) without breaking the graph."""
    return Tensor._node(t.data.reshape(1, -1), (t,), lambda g: (g.reshape(-1),))


def _as_flat(t: Tensor) -> Tensor:
    """View a (1, d) tensor as (d,) without breaking the graph."""
    return Tensor._node(t.data.reshape(-1), (t,), lambda g: (g.reshape(1, -1),))


def gru_step(x, h, p: GruParams) -> Tensor:
    """One GRU transition.

    Gate convention is pinned: z is the update gate and
    h' = (1 - z) * h + z * tanh_candidate, so all-zero weights halve h.
    """
    x, h = _tensor(x), _tensor(h)
    if x.data.shape[-1] != p.input_dim or h.data.shape[-1] != p.hidden_dim:
        raise ShapeError(
            f"gru_step got x dim {x.data.shape[-1]}, h dim {h.data.shape[-1]}; "
            f"params expect ({p.input_dim}, {p.hidden_dim})"
        )
    z = (x @ p.w_z + h @ p.u_z + p.b_z).sigmoid()
    r = (x @ p.w_r + h @ p.u_r + p.b_r).sigmoid()
    c = (x @ p.w_c + (r * h) @ p.u_c + p.b_c).tanh()
    return (1.0 - z) * h + z * c


def encode_bidirectional(
    seq,
    p_fwd: GruParams,
    p_bwd: GruParams,
    mask: np.ndarray | None = None,
) -> tuple[list[Tensor], Tensor]:
    """Run forward and backward GRUs over a step list and concatenate.

    ``seq`` is a list of per-step inputs (each (B, d) or (d,)). ``mask`` is an
    optional (B, T) {0,1} array; masked steps leave the hidden state
    untouched, which makes the encoding invariant to trailing padding.
    Returns (states, final): states[t] = [fwd_t; bwd_t], final = [fwd_last;
    bwd_first], the summary used as the history context vector.
    """
    if len(seq) == 0:
        raise ShapeError("encode_bidirectional needs a nonempty sequence")
    seq = [_tensor(s) for s in seq]
    T = len(seq)
    hidden = p_fwd.hidden_dim
    batched = seq[0].data.ndim == 2
    h_shape = (seq[0].data.shape[0], hidden) if batched else (hidden,)
    dtype = seq[0].data.dtype

    def step_mask(t):
        if mask is None:
            return None
        col = mask[:, t].astype(dtype)
        return col[:, None] if batched else col

    def run(params, order):
        h = Tensor(np.zeros(h_shape, dtype=dtype))
        states = {}
        for t in order:
            h_new = gru_step(seq[t], h, params)
            m = step_mask(t)
            h = h_new if m is None else Tensor(m) * h_new + Tensor(1.0 - m) * h
            states[t] = h
        return states, h

    fwd_states, fwd_last = run(p_fwd, range(T))
    bwd_states, bwd_last = run(p_bwd, range(T - 1, -1, -1))
    states = [concat([fwd_states[t], bwd_states[t]], axis=-1) for t in range(T)]
    final = concat([fwd_last, bwd_last], axis=-1)
    return states, final


def attention_context(
    dec_state,
    enc_states,
    weight: Tensor,
    mask: np.ndarray | None = None,
) -> tuple[Tensor, Tensor]:
    """Multiplicative ("general") attention: score = query^T W enc_state.

    Returns (context, weights); weights are the softmax over positions and
    sum to 1 along axis 1.
    """
    if len(enc_states) == 0:
        raise ShapeError("attention needs at least one encoder state")
    q = _tensor(dec_state)
    single = q.data.ndim == 1
    if single:
        q = _as_row(q)
    proj = q @ weight  # (B, E)
    scores = []
    enc = []
    for s in enc_states:
        s = _tensor(s)
        if s.data.ndim == 1:
            s = _as_row(s)
        enc.append(s)
        scores.append((proj * s).sum(axis=1, keepdims=True))
    weights = masked_softmax(concat(scores, axis=1), mask)  # (B, T)
    context = None
    for t, s in enumerate(enc):
        w_t = cols(weights, t, t + 1)
        term = w_t * s
        context = term if context is None else context + term
    if single:
        context = _as_flat(context)
    return context, weights


def softmax_cross_entropy(logits, target_id: int) -> tuple[Tensor, np.ndarray]:
    """Stable softmax + negative log-likelihood of one target id."""
    logits = _tensor(logits)
    if logits.data.ndim != 1:
        raise ShapeError("softmax_cross_entropy expects 1-D logits")
    V = logits.data.shape[0]
    if not 0 <= target_id < V:
        raise ValueError(f"target id {target_id} out of range for vocab {V}")
    row = _as_row(logits)
    losses, probs = cross_entropy_rows(row, np.array([target_id]))
    loss = losses.sum()
    return loss, probs[0]


def clip_gradients(grads, max_norm: float):
    """Scale the whole gradient set so its global L2 norm is <= max_norm."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    values = list(grads.values()) if isinstance(grads, dict) else list(grads)
    total = float(np.sqrt(sum(float((g * g).sum()) for g in values)))
    if total <= max_norm or total == 0.0:
        scaled = values
    else:
        factor = max_norm / total
        scaled = [g * factor for g in values]
    if isinstance(grads, dict):
        return dict(zip(grads.keys(), scaled))
    return scaled


@dataclass
class OptimizerState:
    """Adam accumulators; shapes mirror the parameter dict."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One bias-corrected Adam step; returns fresh params and state."""
    t = state.step + 1
    new_m, new_v, new_p = {}, {}, {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        new_p[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name], new_v[name] = m, v
    next_state = OptimizerState(
        lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps,
        step=t, m=new_m, v=new_v,
    )
    return new_p, next_state


# -- checkpoint container ------------------------------------------------------
#
# Layout: magic, 8-byte little-endian manifest length, manifest JSON (UTF-8),
# then the raw little-endian value blocks in manifest order. Round-trips are
# bit-exact.

_MAGIC = b"SGCKPT01"


def save_checkpoint(path, family: str, params: dict[str, np.ndarray], extra: dict | None = None) -> None:
    manifest = {
        "family": family,
        "params": [
            {"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)}
            for name, arr in params.items()
        ],
        "extra": extra or {},
    }
    blob = json.dumps(manifest, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name, arr in params.items():
            fh.write(np.ascontiguousarray(arr).astype(arr.dtype, copy=False).tobytes(order="C"))


def load_checkpoint(path) -> tuple[str, dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (length,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(length).decode("utf-8"))
        params: dict[str, np.ndarray] = {}
        for entry in manifest["params"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            params[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return manifest["family"], params, manifest.get("extra", {})
