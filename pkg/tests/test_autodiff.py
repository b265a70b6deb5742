import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from trackae.autodiff import (AdamState, Parameter, Tensor, adam_step, backward, conv1d, conv1d_transpose,
                              conv_geometry, dropout, mae_loss, relu)
from trackae import selfcheck


def T(a, grad=False):
    return Tensor(np.asarray(a, dtype=float), requires_grad=grad)


def conv_matrix(w, length, stride, padding):
    """Dense operator of conv1d for one batch element: rows index (c_out, j),
    columns (c_in, i).  Built column by column from unit impulses."""
    c_out, c_in, k = w.shape
    out_len, pad = conv_geometry(length, k, stride, padding)
    M = np.zeros((c_out * out_len, c_in * length))
    for o in range(c_out):
        for j in range(out_len):
            for c in range(c_in):
                for kk in range(k):
                    i = j * stride + kk - pad
                    if 0 <= i < length:
                        M[o * out_len + j, c * length + i] += w[o, c, kk]
    return M


conv_cfg = st.tuples(st.integers(1, 3), st.integers(1, 7), st.integers(4, 64),
                     st.integers(1, 3), st.integers(1, 3), st.integers(0, 2 ** 31))


# ---------------------------------------------------------------- conv examples

def test_conv1d_valid_example():
    out = conv1d(T([[[1, 2, 3, 4]]]), T([[[1, 1]]]), T([0]), 1, "valid")
    assert out.data.tolist() == [[[3, 5, 7]]]


def test_conv1d_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 3, 9))
    w = np.zeros((3, 3, 1))
    w[range(3), range(3), 0] = 1
    assert np.array_equal(conv1d(T(x), T(w), T(np.zeros(3))).data, x)


def test_conv_shapes():
    assert conv1d(T(np.ones((1, 1, 8))), T(np.ones((1, 1, 7))), None, 2, "same").shape == (1, 1, 4)
    assert conv_geometry(8, 7, 2, "same")[0] == 4
    assert conv1d_transpose(T(np.ones((1, 1, 4))), T(np.ones((1, 1, 3))), None, 2).shape == (1, 1, 8)


def test_conv_transpose_scalar():
    out = conv1d_transpose(T([[[3.0]]]), T([[[2.0]]]), T([0.0]), 1)
    assert out.data.tolist() == [[[6.0]]]


def test_conv_argument_errors():
    with pytest.raises(ValueError):
        conv1d(T(np.ones((1, 2, 8))), T(np.ones((1, 3, 3))))
    with pytest.raises(ValueError):
        conv_geometry(4, 7, 1, "valid")
    with pytest.raises(ValueError):
        conv_geometry(8, 3, 0, "same")
    with pytest.raises(ValueError):
        conv_geometry(8, 3, 1, "full")


@given(conv_cfg, st.sampled_from(["same", "valid"]))
def test_conv1d_matches_dense_operator(cfg, padding):
    s, k, length, c_in, c_out, seed = cfg
    assume(padding == "same" or k <= length)
    rng = np.random.default_rng(seed)
    x, w = rng.normal(size=(1, c_in, length)), rng.normal(size=(c_out, c_in, k))
    got = conv1d(T(x), T(w), None, s, padding).data
    want = conv_matrix(w, length, s, padding) @ x.reshape(-1)
    np.testing.assert_allclose(got.reshape(-1), want, atol=1e-9)


@given(conv_cfg)
def test_conv_transpose_is_dense_transpose(cfg):
    s, k, length, c_in, c_out, seed = cfg
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(c_out, c_in, k))  # conv1d weight; transpose maps c_out -> c_in
    y = rng.normal(size=(1, c_out, length))
    got = conv1d_transpose(T(y), T(w), None, s).data
    want = conv_matrix(w, length * s, s, "same").T @ y.reshape(-1)
    np.testing.assert_allclose(got.reshape(-1), want, atol=1e-9)


@given(conv_cfg, st.floats(-3, 3), st.floats(-3, 3))
def test_conv1d_linearity(cfg, alpha, beta):
    s, k, length, c_in, c_out, seed = cfg
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 2, c_in, length))
    w = T(rng.normal(size=(c_out, c_in, k)))
    lhs = conv1d(T(alpha * x + beta * y), w, None, s).data
    rhs = alpha * conv1d(T(x), w, None, s).data + beta * conv1d(T(y), w, None, s).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(lhs).max()) * 10)


def test_adjoint_identity_100_configs():
    assert selfcheck.check_adjoint(100, seed=7).passed


def test_conv_oracles_100_configs():
    assert all(r.passed for r in selfcheck.check_conv_oracle(100, seed=3))


def test_conv1d_input_grad_is_transpose_of_upstream():
    rng = np.random.default_rng(4)
    x = T(rng.normal(size=(2, 3, 16)), grad=True)
    w = rng.normal(size=(4, 3, 5))
    g = rng.normal(size=(2, 4, 8))
    out = conv1d(x, T(w), None, 2)
    backward((out * T(g)).sum())
    np.testing.assert_allclose(x.grad, conv1d_transpose(T(g), T(w), None, 2).data, atol=1e-12)


# ---------------------------------------------------------------- activations and loss

def test_relu_example():
    assert relu(T([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]


def test_relu_subgradient_zero_at_kink():
    x = T([0.0, 1.0], grad=True)
    backward(relu(x).sum())
    assert x.grad.tolist() == [0.0, 1.0]


def test_dropout_eval_identity():
    x = T(np.random.default_rng(0).normal(size=(3, 4)))
    assert dropout(x, 0.5) is x
    assert np.array_equal(dropout(x, 0.5, training=False).data, x.data)


def test_dropout_survivor_fraction():
    x = T(np.ones(10_000))
    out = dropout(x, 0.5, np.random.default_rng(123), training=True).data
    assert abs(np.mean(out != 0) - 0.5) < 0.05
    assert set(np.unique(out)) <= {0.0, 2.0}  # inverted scaling


def test_dropout_rate_validated():
    with pytest.raises(ValueError):
        dropout(T([1.0]), 1.0)


def test_mae_examples():
    assert float(mae_loss(T([1, 2, 3]), T([1, 2, 3])).data) == 0.0
    assert float(mae_loss(T([1, 2, 3]), T([1, 3, 5])).data) == pytest.approx(1.0)
    assert float(mae_loss(T([0, 0]), T([1, -1])).data) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mae_loss(T([1, 2]), T([1, 2, 3]))


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20), st.data())
def test_mae_nonnegative_and_zero_iff_equal(a, data):
    b = data.draw(st.lists(st.floats(-1e6, 1e6), min_size=len(a), max_size=len(a)))
    v = float(mae_loss(T(a), T(b)).data)
    assert v >= 0
    assert (v == 0) == (a == b)


def test_mae_gradient_zero_at_minimum():
    x = T(np.arange(6.0).reshape(2, 3), grad=True)
    backward(mae_loss(x, T(np.arange(6.0).reshape(2, 3))))
    assert np.all(x.grad == 0)


# ---------------------------------------------------------------- graph mechanics

def test_backward_requires_scalar():
    with pytest.raises(ValueError):
        backward(T([1.0, 2.0], grad=True) * T([1.0, 1.0]))


def test_gradient_accumulates_through_shared_nodes():
    x = T(3.0, grad=True)
    y = x * x + x  # dy/dx = 2x + 1
    backward(y)
    assert float(x.grad) == 7.0


def test_broadcast_gradients_reduce_to_shape():
    a = T(np.ones((2, 3)), grad=True)
    b = T(np.array([1.0, 2.0, 3.0]), grad=True)
    backward((a * b).sum())
    assert b.grad.shape == (3,) and b.grad.tolist() == [2.0, 2.0, 2.0]
    np.testing.assert_array_equal(a.grad, np.tile([1.0, 2.0, 3.0], (2, 1)))


def test_deterministic_forward_backward():
    def run():
        rng = np.random.default_rng(9)
        x = T(rng.normal(size=(2, 2, 32)), grad=True)
        w = T(rng.normal(size=(3, 2, 5)), grad=True)
        out = dropout(relu(conv1d(x, w, None, 2)), 0.2, np.random.default_rng(1), training=True)
        loss = mae_loss(out, T(np.zeros(out.shape)))
        backward(loss)
        return loss.data.tobytes(), x.grad.tobytes(), w.grad.tobytes()

    assert run() == run()


# ---------------------------------------------------------------- gradient checks

def test_primitive_gradchecks():
    for r in selfcheck.primitive_gradchecks(range(5)):
        assert r.passed, r.line()


def test_composed_autoencoder_gradcheck():
    r = selfcheck.autoencoder_gradcheck(range(5))
    assert r.passed, r.line()


def test_gradcheck_catches_wrong_gradient():
    # a backward rule that is off by a factor of two must be caught
    def bad_square(t):
        x = t[0]
        return Tensor(x.data ** 2, (x,), lambda g: (g * x.data,)).sum()

    err = selfcheck.gradcheck(bad_square, [np.random.default_rng(0).normal(size=5)])
    assert err > 1e-2


# ---------------------------------------------------------------- Adam

def _param(value, grad, frozen=False):
    p = Parameter(np.array([value], dtype=float), "p", frozen)
    p.grad = np.array([grad], dtype=float)
    return p


def test_adam_zero_gradient_no_change():
    p = _param(1.0, 0.0)
    adam_step([p], AdamState(lr=0.1))
    assert p.data[0] == 1.0


def test_adam_first_step():
    p = _param(1.0, 4.0)
    adam_step([p], AdamState(lr=0.01))
    assert p.data[0] == pytest.approx(0.99, abs=1e-6)


def test_adam_frozen_bitwise_unchanged():
    p = _param(0.123456789, 5.0, frozen=True)
    before = p.data.tobytes()
    state = AdamState(lr=0.5)
    for _ in range(3):
        adam_step([p], state)
    assert p.data.tobytes() == before


def test_adam_matches_reference_formula():
    rng = np.random.default_rng(0)
    grads = rng.normal(size=(5, 4))
    p = Parameter(np.zeros(4), "w")
    state = AdamState(lr=1e-2)
    m = v = np.zeros(4)
    ref = np.zeros(4)
    for t, g in enumerate(grads, start=1):
        p.grad = g.copy()
        adam_step([p], state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 1e-2 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p.data, ref, rtol=1e-12, atol=1e-15)
