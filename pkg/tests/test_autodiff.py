import numpy as np
import pytest

from sentigen.autodiff import (
    NonDeterministicLossError,
    Tensor,
    cols,
    concat,
    cross_entropy_rows,
    finite_difference_check,
    gather_rows,
    masked_softmax,
)


def test_add_mul_backward():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    b = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    ((a * b) + a).sum().backward()
    np.testing.assert_allclose(a.grad, [4.0, 5.0])
    np.testing.assert_allclose(b.grad, [1.0, 2.0])


def test_broadcast_bias_backward():
    x = Tensor(np.ones((3, 2)), requires_grad=True)
    b = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    (x + b).sum().backward()
    np.testing.assert_allclose(b.grad, [3.0, 3.0])
    np.testing.assert_allclose(x.grad, np.ones((3, 2)))


def test_matmul_backward_matches_fd():
    rng = np.random.default_rng(0)
    params = {"a": rng.normal(size=(3, 4)), "w": rng.normal(size=(4, 2))}

    def loss(p):
        return ((p["a"] @ p["w"]).tanh() ** 2.0).sum()

    assert finite_difference_check(loss, params, eps=1e-6) < 1e-8


def test_gather_rows_scatter_adds():
    table = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    out = gather_rows(table, np.array([0, 2, 0]))
    out.sum().backward()
    np.testing.assert_allclose(table.grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])


def test_cross_entropy_uniform_rows():
    logits = Tensor(np.zeros((2, 3)), requires_grad=True)
    losses, probs = cross_entropy_rows(logits, np.array([0, 2]))
    np.testing.assert_allclose(probs, np.full((2, 3), 1 / 3))
    np.testing.assert_allclose(losses.data, np.log(3) * np.ones((2, 1)))


def test_cross_entropy_rejects_bad_target():
    logits = Tensor(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        cross_entropy_rows(logits, np.array([3]))


def test_masked_softmax_zeroes_masked_positions():
    scores = Tensor(np.array([[1.0, 2.0, 3.0]]), requires_grad=True)
    mask = np.array([[1.0, 1.0, 0.0]])
    w = masked_softmax(scores, mask)
    assert w.data[0, 2] == 0.0
    np.testing.assert_allclose(w.data.sum(), 1.0, atol=1e-12)


def test_concat_cols_roundtrip():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.full((2, 3), 2.0), requires_grad=True)
    joined = concat([a, b], axis=1)
    cols(joined, 2, 5).sum().backward()
    np.testing.assert_allclose(a.grad, np.zeros((2, 2)))
    np.testing.assert_allclose(b.grad, np.ones((2, 3)))


def test_clamp_gradient_gates():
    x = Tensor(np.array([-2.0, 0.0, 2.0]), requires_grad=True)
    x.clamp(-1.0, 1.0).sum().backward()
    np.testing.assert_allclose(x.grad, [0.0, 1.0, 0.0])


def test_fd_check_linear_function():
    params = {"w": np.random.default_rng(1).uniform(-1, 1, size=(4, 4))}

    def loss(p):
        return p["w"].sum()

    assert finite_difference_check(loss, params, eps=1e-5) < 1e-10


def test_fd_check_zero_stationary_point():
    params = {"x": np.zeros(5)}

    def loss(p):
        return (p["x"] ** 2.0).sum()

    assert finite_difference_check(loss, params) == 0.0


def test_fd_check_detects_nondeterminism():
    state = {"n": 0}

    def loss(p):
        state["n"] += 1
        return p["x"].sum() * float(state["n"])

    with pytest.raises(NonDeterministicLossError):
        finite_difference_check(loss, {"x": np.ones(2)})


def test_stability_no_nan_on_bounded_inputs():
    rng = np.random.default_rng(3)
    for _ in range(20):
        logits = Tensor(rng.uniform(-10, 10, size=(4, 7)))
        losses, probs = cross_entropy_rows(logits, rng.integers(0, 7, size=4))
        assert np.isfinite(losses.data).all() and np.isfinite(probs).all()
        w = masked_softmax(Tensor(rng.uniform(-10, 10, size=(4, 5))))
        assert np.isfinite(w.data).all()
