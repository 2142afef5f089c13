import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marauder import autodiff as ad
from marauder.autodiff import Tensor, grad_check

RNG = np.random.default_rng(1234)


def t64(*shape, scale=1.0, rng=RNG):
    return Tensor(rng.normal(0, scale, shape), dtype=np.float64)


# -- oracles -------------------------------------------------------------------

def matmul_oracle(A, B):
    m, k = A.shape
    _, n = B.shape
    C = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for p in range(k):
                s += A[i, p] * B[p, j]
            C[i, j] = s
    return C


def conv_oracle(x, k, stride=1, pad=0):
    C, H, W = x.shape
    O, _, kh, kw = k.shape
    xp = np.zeros((C, H + 2 * pad, W + 2 * pad))
    xp[:, pad:pad + H, pad:pad + W] = x
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((O, Ho, Wo))
    for o in range(O):
        for i in range(Ho):
            for j in range(Wo):
                s = 0.0
                for c in range(C):
                    for u in range(kh):
                        for v in range(kw):
                            s += xp[c, i * stride + u, j * stride + v] * k[o, c, u, v]
                out[o, i, j] = s
    return out


# -- matmul ---------------------------------------------------------------------

def test_matmul_identity():
    A = t64(3, 3)
    assert np.array_equal((A @ Tensor(np.eye(3))).data, A.data)


def test_matmul_scalar_case():
    assert (Tensor([[2.0]]) @ Tensor([[3.0]])).data.tolist() == [[6.0]]


def test_matmul_matches_triple_loop():
    A, B = t64(4, 5), t64(5, 3)
    assert np.allclose((A @ B).data, matmul_oracle(A.data, B.data), atol=1e-12, rtol=0)


def test_matmul_shape_mismatch():
    with pytest.raises(ad.ShapeMismatch):
        ad.matmul(t64(2, 3), t64(2, 3))


def test_matmul_gradient():
    assert grad_check(lambda a, b: ad.tsum(ad.tanh(a @ b)), [t64(4, 5), t64(5, 3)]) < 1e-6


# -- conv2d --------------------------------------------------------------------

def test_conv_identity_kernel():
    x = t64(1, 5, 5)
    k = Tensor(np.ones((1, 1, 1, 1)))
    assert np.array_equal(ad.conv2d(x, k).data, x.data)


def test_conv_box_sum():
    x = Tensor(np.full((1, 6, 6), 2.5))
    out = ad.conv2d(x, Tensor(np.ones((1, 1, 3, 3))))
    assert np.allclose(out.data, 9 * 2.5)


def test_conv_matches_nested_loops():
    x, k = t64(2, 8, 8), t64(3, 2, 3, 3)
    assert np.allclose(ad.conv2d(x, k).data, conv_oracle(x.data, k.data), atol=1e-10, rtol=0)


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (2, 0)])
def test_conv_stride_padding_matches_oracle(stride, pad):
    x, k = t64(2, 7, 7), t64(2, 2, 3, 3)
    assert np.allclose(ad.conv2d(x, k, stride=stride, padding=pad).data,
                       conv_oracle(x.data, k.data, stride, pad), atol=1e-10, rtol=0)


def test_conv_bad_shapes():
    with pytest.raises(ad.ShapeMismatch):
        ad.conv2d(t64(2, 8, 8), t64(3, 3, 3, 3))
    with pytest.raises(ad.ShapeMismatch):
        ad.conv2d(t64(1, 8, 8), t64(1, 1, 3, 3), stride=2)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_conv_gradient(stride, pad):
    x, k, b = t64(2, 2, 5, 5), t64(3, 2, 3, 3), t64(3)
    f = lambda x, k, b: ad.tsum(ad.tanh(ad.conv2d(x, k, b, stride=stride, padding=pad)))
    assert grad_check(f, [x, k, b]) < 1e-4


# -- elementwise, softmax, pooling ---------------------------------------------

def test_softmax_shift_invariance():
    for c in (-50.0, 0.0, 3.0, 700.0):
        assert np.allclose(ad.softmax(Tensor(np.full(3, c), dtype=np.float64)).data, 1 / 3)


def test_simple_values():
    assert ad.tanh(Tensor([0.0])).data[0] == 0.0
    assert ad.relu(Tensor([-1.0])).data[0] == 0.0


def test_softmax_no_overflow():
    y = ad.softmax(Tensor([1000.0, 0.0], dtype=np.float64)).data
    # oracle: explicit max-subtraction in extended precision
    z = np.array([0.0, -1000.0], dtype=np.longdouble)
    expect = np.exp(z) / np.exp(z).sum()
    assert np.all(np.isfinite(y))
    assert abs(y[0] - 1.0) < 1e-15 and abs(y[1] - float(expect[1])) < 1e-300


def test_softmax_rejects_nonfinite():
    with pytest.raises(ad.NonFiniteInput):
        ad.softmax(Tensor([np.inf, 0.0]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=20))
def test_softmax_is_distribution(xs):
    y = ad.softmax(Tensor(np.array(xs), dtype=np.float64)).data
    assert np.all(y >= 0)
    assert abs(y.sum() - 1) < 1e-6


def test_maxpool_first_index_tie_break():
    x = Tensor(np.ones((1, 2, 2)), dtype=np.float64, requires_grad=True)
    ad.backward(ad.tsum(ad.maxpool2d(x, 2)))
    assert x.grad.tolist() == [[[1.0, 0.0], [0.0, 0.0]]]


def test_avgpool_routes_uniformly():
    x = Tensor(np.arange(16.0).reshape(1, 4, 4), dtype=np.float64, requires_grad=True)
    y = ad.avgpool2d(x, 2)
    assert y.data.tolist() == [[[2.5, 4.5], [10.5, 12.5]]]
    ad.backward(ad.tsum(y))
    assert np.all(x.grad == 0.25)


def test_pool_ceil_truncates_boundary():
    x = Tensor(np.arange(25.0).reshape(1, 5, 5), dtype=np.float64)
    assert ad.maxpool2d(x, 2).shape == (1, 3, 3)
    assert ad.maxpool2d(x, 2).data[0, 2, 2] == 24.0
    assert ad.avgpool2d(x, 2).data[0, 2, 2] == 24.0
    assert ad.avgpool2d(x, 2).data[0, 0, 2] == (4.0 + 9.0) / 2


ELEMENTWISE = {
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "relu": ad.relu,
    "exp": ad.exp,
    "softmax": lambda x: ad.softmax(x, axis=-1),
    "log_softmax": lambda x: ad.log_softmax(x, axis=-1),
    "maxpool": lambda x: ad.maxpool2d(x, 2),
    "avgpool": lambda x: ad.avgpool2d(x, 2),
    "avgpool_ragged": lambda x: ad.avgpool2d(x, 3),
    "transpose": lambda x: ad.transpose(x, (2, 0, 1)),
    "reshape": lambda x: ad.reshape(x, (-1,)),
    "slice": lambda x: x[:, 1:3, ::2],
    "mean": lambda x: ad.mean(x, axis=(1, 2)),
}


@pytest.mark.parametrize("name", sorted(ELEMENTWISE))
def test_unary_gradients(name):
    op = ELEMENTWISE[name]
    x = t64(2, 4, 4)
    w = t64(*op(x).shape)  # random projection so the loss is not symmetric
    assert grad_check(lambda x: ad.tsum(ad.mul(op(x), w)), [x]) < 1e-4


def test_binary_broadcast_gradients():
    a, b = t64(3, 4), t64(4)
    c = Tensor(RNG.uniform(1, 2, (3, 1)), dtype=np.float64)
    f = lambda a, b, c: ad.tsum(ad.div(ad.sub(ad.mul(a, b), c), c) + a)
    assert grad_check(f, [a, b, c]) < 1e-4


def test_concat_stack_index_gradients():
    a, b = t64(2, 3), t64(2, 5)
    idx = np.array([[0, 1], [1, 1]])
    def f(a, b):
        c = ad.concat([a, b], axis=1)
        s = ad.stack([c, ad.tanh(c)], axis=0)
        return ad.tsum(ad.mul(ad.index(s[0], idx), ad.index(s[1], idx)))
    assert grad_check(f, [a, b]) < 1e-4


def test_log_gradient():
    x = Tensor(RNG.uniform(0.5, 2.0, (3, 3)), dtype=np.float64)
    assert grad_check(lambda x: ad.tsum(ad.log(x)), [x]) < 1e-6


# -- LSTM ------------------------------------------------------------------------

def test_lstm_zero_params_zero_state():
    D, H = 3, 4
    h, c = ad.lstm_cell(t64(D), Tensor(np.zeros(H)), Tensor(np.zeros(H)),
                        Tensor(np.zeros((D + H, 4 * H))), Tensor(np.zeros(4 * H)))
    assert np.all(h.data == 0) and np.all(c.data == 0)


def test_lstm_forget_saturation():
    D, H = 3, 4
    bias = np.zeros(4 * H)
    bias[H:2 * H] = 50.0
    c_prev = t64(H)
    _, c = ad.lstm_cell(t64(D), t64(H), c_prev, Tensor(np.zeros((D + H, 4 * H))), Tensor(bias))
    sig50 = 1.0 / (1.0 + math.exp(-50.0))  # scalar oracle
    assert np.allclose(c.data, sig50 * c_prev.data, atol=1e-12)
    assert np.max(np.abs(c.data - c_prev.data)) < 1e-9


def test_lstm_gradients_through_time():
    D, H, T = 3, 4, 3
    xs = [t64(2, D) for _ in range(T)]
    W, b = t64(D + H, 4 * H, scale=0.5), t64(4 * H, scale=0.5)
    def f(W, b, *xs):
        h = Tensor(np.zeros((2, H)))
        c = Tensor(np.zeros((2, H)))
        total = None
        for x in xs:
            h, c = ad.lstm_cell(x, h, c, W, b)
            total = ad.tsum(h) if total is None else total + ad.tsum(h)
        return total
    assert grad_check(f, [W, b] + xs, eps=1e-5) < 1e-4


def test_lstm_shape_mismatch():
    with pytest.raises(ad.ShapeMismatch):
        ad.lstm_cell(t64(3), t64(4), t64(4), t64(6, 16), t64(16))


# -- loss --------------------------------------------------------------------------

def test_cross_entropy_uniform():
    assert abs(ad.cross_entropy(Tensor(np.zeros(4), dtype=np.float64), 2).item() - math.log(4)) < 1e-12


def test_cross_entropy_saturated():
    assert ad.cross_entropy(Tensor([50.0, 0, 0, 0], dtype=np.float64), 0).item() < 1e-20


def test_cross_entropy_gradient():
    logits = t64(5, 4)
    tgt = np.array([0, 3, 1, 1, 2])
    assert grad_check(lambda l: ad.cross_entropy(l, tgt), [logits]) < 1e-4
    single = t64(4)
    assert grad_check(lambda l: ad.cross_entropy(l, 1), [single]) < 1e-4


def test_cross_entropy_backward_formula():
    logits = t64(4)
    logits.requires_grad = True
    ad.backward(ad.cross_entropy(logits, 2))
    p = np.exp(logits.data - logits.data.max())
    p /= p.sum()
    p[2] -= 1
    assert np.allclose(logits.grad, p, atol=1e-14)


def test_cross_entropy_bad_target():
    with pytest.raises(ad.IndexOutOfRange):
        ad.cross_entropy(Tensor(np.zeros(3)), 3)


# -- backward & optimizers -----------------------------------------------------

def test_backward_sum():
    x = Tensor(RNG.normal(size=5), requires_grad=True, dtype=np.float64)
    ad.backward(ad.tsum(x))
    assert np.array_equal(x.grad, np.ones(5))


def test_backward_square():
    x = Tensor(RNG.normal(size=5), requires_grad=True, dtype=np.float64)
    ad.backward(ad.tsum(x * x))
    assert np.allclose(x.grad, 2 * x.data)


def test_fan_out_accumulates():
    x = Tensor([3.0], requires_grad=True, dtype=np.float64)
    y = x * x
    ad.backward(ad.tsum(y + y + x))
    assert x.grad.tolist() == [13.0]


def test_backward_detached():
    with pytest.raises(ad.DetachedTensor):
        ad.backward(ad.tsum(Tensor([1.0, 2.0])))


def test_grad_check_scalar_cases():
    assert grad_check(lambda x: ad.tsum(x * x), [Tensor([3.0], dtype=np.float64)]) < 1e-8
    assert grad_check(lambda x: ad.tsum(ad.tanh(x)), [Tensor([0.5], dtype=np.float64)]) < 1e-8


def test_grad_check_negative_control():
    x = Tensor([0.5, -1.2], dtype=np.float64)
    f = lambda x: ad.tsum(ad.tanh(x))
    bad = [ad.analytic_grad(f, [x])[0] * 1.5]
    assert grad_check(f, [x], analytic=bad) > 0.1


def test_adam_converges_on_quadratic():
    target = np.array([1.5, -2.0, 0.25])
    x = Tensor(np.zeros(3), requires_grad=True, dtype=np.float64)
    opt = ad.Adam([x], lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        d = x - Tensor(target)
        ad.backward(ad.tsum(d * d))
        opt.step()
    assert np.max(np.abs(x.data - target)) < 1e-3


def test_sgd_step():
    x = Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
    ad.backward(ad.tsum(x * x))
    ad.SGD([x], lr=0.25).step()
    assert x.data.tolist() == [0.5, 1.0]


def test_adam_bias_correction_first_step():
    # First Adam step moves each coordinate by lr * sign(g) (up to eps).
    x = Tensor([1.0, -3.0], requires_grad=True, dtype=np.float64)
    ad.backward(ad.tsum(x * x))
    ad.Adam([x], lr=0.01).step()
    assert np.allclose(x.data, [0.99, -2.99], atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
def test_random_shape_matmul_grad(m, k, n, seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(size=(m, k)), dtype=np.float64)
    b = Tensor(rng.normal(size=(k, n)), dtype=np.float64)
    assert grad_check(lambda a, b: ad.tsum(ad.sigmoid(a @ b)), [a, b]) < 1e-4
