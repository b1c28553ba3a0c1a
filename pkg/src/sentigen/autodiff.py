"""Reverse-mode automatic differentiation over numpy arrays.

Small, dependency-free substrate for the recurrent models in this package.
A :class:`Tensor` wraps an ndarray; operations build a DAG and
:meth:`Tensor.backward` accumulates gradients into every reachable
parameter. Everything runs in float64 by default (float32 is tolerated for
speed but gradient checks are only meaningful at 64 bits).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "concat",
    "cols",
    "gather_rows",
    "cross_entropy_rows",
    "masked_softmax",
    "finite_difference_check",
    "NonDeterministicLossError",
]

_FLOATS = (np.float32, np.float64)


class NonDeterministicLossError(RuntimeError):
    """Raised when a loss function returns different values on re-evaluation."""


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype not in _FLOATS:
        arr = arr.astype(np.float64)
    if dtype is not None and arr.dtype != dtype:
        arr = arr.astype(dtype)
    return arr


class Tensor:
    """An ndarray plus the plumbing needed for reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data: np.ndarray = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _node(data, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    # -- autograd engine -----------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar loss")
        order = self._toposort()
        self.grad = np.ones_like(self.data)
        for node in order:
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g

    def _toposort(self) -> list["Tensor"]:
        # Iterative DFS; recurrent graphs get deep enough to overflow the
        # interpreter stack with a recursive version.
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        order.reverse()
        return order

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = _wrap(other, self.data.dtype)
        out = self.data + other.data

        def backward(g):
            return _unbroadcast(g, self.data.shape), _unbroadcast(g, other.data.shape)

        return Tensor._node(out, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        return Tensor._node(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-_wrap(other, self.data.dtype))

    def __rsub__(self, other):
        return _wrap(other, self.data.dtype) + (-self)

    def __mul__(self, other):
        other = _wrap(other, self.data.dtype)
        out = self.data * other.data

        def backward(g):
            return (
                _unbroadcast(g * other.data, self.data.shape),
                _unbroadcast(g * self.data, other.data.shape),
            )

        return Tensor._node(out, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other, self.data.dtype)
        out = self.data / other.data

        def backward(g):
            ga = _unbroadcast(g / other.data, self.data.shape)
            gb = _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
            return ga, gb

        return Tensor._node(out, (self, other), backward)

    def __pow__(self, exponent: float):
        out = self.data ** exponent

        def backward(g):
            return (g * exponent * self.data ** (exponent - 1),)

        return Tensor._node(out, (self,), backward)

    def __matmul__(self, other):
        other = _wrap(other, self.data.dtype)
        out = self.data @ other.data

        def backward(g):
            a, b = self.data, other.data
            if a.ndim == 1 and b.ndim == 2:   # (i,) @ (i,o) -> (o,)
                return g @ b.T, np.outer(a, g)
            if a.ndim == 2 and b.ndim == 2:   # (B,i) @ (i,o) -> (B,o)
                return g @ b.T, a.T @ g
            raise ValueError(f"unsupported matmul shapes {a.shape} @ {b.shape}")

        return Tensor._node(out, (self, other), backward)

    # -- nonlinearities -------------------------------------------------------

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor._node(out, (self,), lambda g: (g * (1.0 - out * out),))

    def sigmoid(self):
        out = expit(self.data)
        return Tensor._node(out, (self,), lambda g: (g * out * (1.0 - out),))

    def exp(self):
        out = np.exp(self.data)
        return Tensor._node(out, (self,), lambda g: (g * out,))

    def log(self):
        out = np.log(self.data)
        return Tensor._node(out, (self,), lambda g: (g / self.data,))

    def clamp(self, lo: float, hi: float):
        out = np.clip(self.data, lo, hi)
        inside = ((self.data > lo) & (self.data < hi)).astype(self.data.dtype)
        return Tensor._node(out, (self,), lambda g: (g * inside,))

    # -- reductions / shaping --------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, self.data.shape).copy(),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, self.data.shape).copy(),)

        return Tensor._node(out, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(_as_array(value, dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [p if isinstance(p, Tensor) else Tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._node(out, tuple(parts), backward)


def cols(t: Tensor, start: int, stop: int) -> Tensor:
    """Column slice along the last axis."""
    out = t.data[..., start:stop]

    def backward(g):
        full = np.zeros_like(t.data)
        full[..., start:stop] = g
        return (full,)

    return Tensor._node(out, (t,), backward)


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup (embedding); gradient scatter-adds into the table."""
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return Tensor._node(out, (table,), backward)


def cross_entropy_rows(logits: Tensor, targets: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Softmax cross-entropy per row.

    Returns (losses, probs): losses has shape (B, 1) and carries the graph,
    probs is the forward softmax as a plain array. Max-subtraction keeps the
    softmax finite for any finite logits.
    """
    targets = np.asarray(targets, dtype=np.int64)
    x = logits.data
    if x.ndim != 2:
        raise ValueError("cross_entropy_rows expects (B, V) logits")
    if targets.min() < 0 or targets.max() >= x.shape[1]:
        raise ValueError("target id out of range")
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    denom = e.sum(axis=1, keepdims=True)
    probs = e / denom
    rows = np.arange(x.shape[0])
    logp = shifted[rows, targets] - np.log(denom[:, 0])
    losses = -logp[:, None]

    def backward(g):
        d = probs.copy()
        d[rows, targets] -= 1.0
        return (d * g,)

    return Tensor._node(losses, (logits,), backward), probs


def masked_softmax(scores: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row softmax with optional {0,1} mask; masked entries get zero weight."""
    if mask is not None:
        scores = scores + Tensor((1.0 - mask) * -1e30)
    shift = scores.data.max(axis=1, keepdims=True)   # constant shift, gradient-safe
    e = (scores - Tensor(shift)).exp()
    return e / e.sum(axis=1, keepdims=True)


def finite_difference_check(
    loss_fn: Callable[[dict[str, Tensor]], Tensor],
    params: dict[str, np.ndarray],
    eps: float = 1e-6,
    max_coords_per_param: int | None = None,
    seed: int = 0,
) -> float:
    """Compare analytic gradients with central differences, coordinate-wise.

    ``loss_fn`` maps a dict of Tensors to a scalar Tensor and must be
    deterministic; it is evaluated twice and any mismatch raises
    :class:`NonDeterministicLossError`. Returns the worst relative error over
    all checked coordinates. Denominators are floored at 0.1*sqrt(eps): a
    central difference carries ~machine_eps/eps of rounding noise, so
    coordinates with smaller true gradients cannot be resolved to a tighter
    relative accuracy and would otherwise report spurious errors.
    ``max_coords_per_param`` optionally subsamples coordinates (seeded) to
    bound runtime on big parameter sets.
    """
    live = {k: Tensor(v.astype(np.float64, copy=True), requires_grad=True) for k, v in params.items()}
    loss = loss_fn(live)
    repeat = loss_fn({k: Tensor(t.data.copy()) for k, t in live.items()})
    if float(loss.data) != float(repeat.data):
        raise NonDeterministicLossError(
            f"loss changed between evaluations: {float(loss.data)!r} vs {float(repeat.data)!r}"
        )
    loss.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in live.items()}

    rng = np.random.default_rng(seed)
    base = {k: t.data for k, t in live.items()}

    def eval_at(arrays: dict[str, np.ndarray]) -> float:
        return float(loss_fn({k: Tensor(v) for k, v in arrays.items()}).data)

    worst = 0.0
    floor = 0.1 * np.sqrt(eps)
    for name, value in base.items():
        flat_idx = np.arange(value.size)
        if max_coords_per_param is not None and value.size > max_coords_per_param:
            flat_idx = np.sort(rng.choice(value.size, size=max_coords_per_param, replace=False))
        for idx in flat_idx:
            bumped = {k: (v.copy() if k == name else v) for k, v in base.items()}
            bumped[name].flat[idx] = value.flat[idx] + eps
            hi = eval_at(bumped)
            bumped[name].flat[idx] = value.flat[idx] - eps
            lo = eval_at(bumped)
            numeric = (hi - lo) / (2.0 * eps)
            exact = analytic[name].flat[idx]
            denom = max(abs(numeric), abs(exact), floor)
            worst = max(worst, abs(numeric - exact) / denom)
    return worst
