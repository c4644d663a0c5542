import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from sbdehaze import nn
from sbdehaze import tensor as T
from sbdehaze.errors import ContractError, DimensionError, DomainError
from sbdehaze.tensor import Tensor, grad_check


def leaf(x):
    return Tensor(np.asarray(x, dtype=float), requires_grad=True)


def test_add_elementwise():
    assert np.array_equal((Tensor([1.0, 2.0]) + Tensor([3.0, 4.0])).data, [4.0, 6.0])


def test_matmul_identity():
    v = Tensor([3.0, -1.5])
    assert np.array_equal(T.matmul(Tensor(np.eye(2)), v).data, v.data)


@given(st.floats(-50, 50))
def test_softmax_of_equal_entries(c):
    assert np.allclose(T.softmax(Tensor([c, c])).data, [0.5, 0.5])


def test_shape_mismatch_is_dimension_error():
    with pytest.raises(DimensionError):
        Tensor(np.ones(3)) + Tensor(np.ones(4))
    with pytest.raises(DimensionError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_checked_mode_domain_errors():
    with pytest.raises(DomainError):
        T.log(Tensor([-1.0]))
    with pytest.raises(DomainError):
        T.sqrt(Tensor([-1.0]))
    with pytest.raises(DomainError), np.errstate(divide="ignore"):
        Tensor([1.0]) / Tensor([0.0])


def test_unchecked_mode_lets_nan_through():
    with T.checked_mode(False), np.errstate(invalid="ignore"):
        assert np.isnan(T.sqrt(Tensor([-1.0])).data[0])


def test_backward_square():
    x = leaf([1.0, 2.0])
    T.sum(x * x).backward()
    assert np.array_equal(x.grad, [2.0, 4.0])


def test_backward_constant_writes_nothing():
    c = Tensor(3.0)
    c.backward()
    assert c.grad is None


def test_backward_needs_scalar():
    x = leaf([1.0, 2.0])
    with pytest.raises(ContractError):
        (x * 2).backward()


def test_no_graph_without_grad_inputs():
    out = Tensor([1.0]) * Tensor([2.0])
    assert not out.requires_grad and out._parents == ()
    with T.no_grad():
        assert not (leaf([1.0]) * 2).requires_grad


@pytest.mark.parametrize("k", [1, 2, 5])
def test_gradient_accumulates_k_fold(k):
    x = leaf([0.5, -1.0, 2.0])
    total = x
    for _ in range(k - 1):
        total = total + x
    T.sum(total * 3.0).backward()
    assert np.array_equal(x.grad, np.full(3, 3.0 * k))


def test_grad_accumulates_across_backward_calls():
    x = leaf([1.0])
    T.sum(x * 2).backward()
    T.sum(x * 2).backward()
    assert x.grad[0] == 4.0


def test_diamond_graph_visits_each_node_once():
    x = leaf([1.5])
    y = T.exp(x)
    z = y * y + y
    T.sum(z).backward()
    e = np.exp(1.5)
    assert np.isclose(x.grad[0], 2 * e * e + e, rtol=1e-14)


def test_grad_check_sum_is_exact():
    x = np.random.default_rng(0).standard_normal((3, 4))
    assert grad_check(lambda v: T.sum(v), x) < 1e-9


def test_grad_check_exp_at_zero():
    assert grad_check(lambda v: T.sum(T.exp(v)), np.array([0.0])) < 1e-8


def test_mlp_gradients_match_finite_differences(rng):
    layers = [nn.Linear(4, 8, rng), nn.Linear(8, 8, rng), nn.Linear(8, 1, rng)]
    x = rng.standard_normal((5, 4))

    def loss_wrt_input(v):
        h = T.tanh(layers[0](v))
        h = T.sigmoid(layers[1](h))
        return T.mean(T.square(layers[2](h)))

    assert grad_check(loss_wrt_input, x, eps=1e-4) < 1e-4

    w = layers[1].weight

    def loss_wrt_weight(v):
        h = T.tanh(layers[0](x))
        h = T.sigmoid(h @ v + layers[1].bias)
        return T.mean(T.square(layers[2](h)))

    assert grad_check(loss_wrt_weight, w.data, eps=1e-4) < 1e-4


# every elementary op: backward(sum(op(x))) against central differences
UNARY = {
    "exp": T.exp,
    "log": lambda v: T.log(v + 3.0),
    "sqrt": lambda v: T.sqrt(v + 3.0),
    "tanh": T.tanh,
    "sigmoid": T.sigmoid,
    "relu": T.relu,
    "leaky_relu": T.leaky_relu,
    "abs": T.abs,
    "square": T.square,
    "power": lambda v: T.power(v + 3.0, 1.5),
    "neg": lambda v: -v,
    "softmax": lambda v: T.softmax(v, axis=-1) * np.arange(4.0),
    "log_softmax": lambda v: T.log_softmax(v, axis=0) * np.arange(4.0),
    "logsumexp": lambda v: T.logsumexp(v, axis=1),
    "mean": lambda v: T.mean(v, axis=0),
    "max": lambda v: T.max(v, axis=1),
    "min": lambda v: T.min(v, axis=0),
    "reshape": lambda v: T.reshape(v, (2, 6)) * np.arange(12.0).reshape(2, 6),
    "transpose": lambda v: T.transpose(v) * np.arange(12.0).reshape(4, 3),
    "slice": lambda v: v[1:, ::2] * 2.0,
    "take": lambda v: T.take(v, np.array([0, 2, 2]), axis=0),
    "concat": lambda v: T.concat([v, v * 2.0], axis=1),
    "stack": lambda v: T.stack([v, T.exp(v)], axis=0),
    "clip": lambda v: T.clip(v, -0.5, 0.5),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_elementary_op_gradients(name, rng):
    x = rng.uniform(-1.0, 1.0, (3, 4))
    if name in ("relu", "leaky_relu", "abs", "clip"):
        x = np.where(np.abs(x) < 0.05, 0.3, x)
        x = np.where(np.abs(np.abs(x) - 0.5) < 0.05, 0.3, x)
    fn = UNARY[name]
    assert grad_check(lambda v: T.sum(fn(v)), x, eps=1e-4) < 1e-4


@pytest.mark.parametrize("op", ["add", "sub", "mul", "div", "maximum", "minimum"])
def test_binary_op_gradients_with_broadcast(op, rng):
    a = rng.uniform(0.5, 1.5, (3, 4))
    b = rng.uniform(-1.0, -0.2, (1, 4))
    fn = getattr(T, op)
    assert grad_check(lambda v: T.sum(fn(v, Tensor(b)) * np.arange(12.0).reshape(3, 4)), a) < 1e-4
    assert grad_check(lambda v: T.sum(fn(Tensor(a), v) * np.arange(12.0).reshape(3, 4)), b) < 1e-4


def test_matmul_gradients(rng):
    a = rng.standard_normal((2, 3, 4))
    b = rng.standard_normal((4, 5))
    assert grad_check(lambda v: T.sum(T.square(v @ Tensor(b))), a) < 1e-4
    assert grad_check(lambda v: T.sum(T.square(Tensor(a) @ v)), b) < 1e-4
    vec = rng.standard_normal(4)
    assert grad_check(lambda v: T.sum(T.square(Tensor(b.T) @ v)), vec) < 1e-4


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_gradients(stride, padding, rng):
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)

    def f(xt, wt, bt):
        out = T.conv2d(xt, wt, bt, stride=stride, padding=padding)
        return T.sum(T.square(out))

    assert grad_check(lambda v: f(v, Tensor(w), Tensor(b)), x) < 1e-4
    assert grad_check(lambda v: f(Tensor(x), v, Tensor(b)), w) < 1e-4
    assert grad_check(lambda v: f(Tensor(x), Tensor(w), v), b) < 1e-4


def test_conv2d_matches_direct_loop(rng):
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    out = T.conv2d(Tensor(x), Tensor(w), padding=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((1, 3, 5, 5))
    for o in range(3):
        for i in range(5):
            for j in range(5):
                ref[0, o, i, j] = np.sum(xp[0, :, i:i + 3, j:j + 3] * w[o])
    assert np.allclose(out, ref, atol=1e-12)


@pytest.mark.parametrize("mode", ["zeros", "edge", "wrap"])
def test_pad2d_gradients(mode, rng):
    x = rng.standard_normal((1, 2, 4, 4))
    ramp = np.arange(2 * 8 * 8.0).reshape(1, 2, 8, 8)
    assert grad_check(lambda v: T.sum(T.pad2d(v, 2, mode) * ramp), x) < 1e-4


def test_spatial_op_gradients(rng):
    x = rng.standard_normal((2, 2, 4, 4))
    assert grad_check(lambda v: T.sum(T.square(T.upsample_nearest(v, 2))), x) < 1e-4
    assert grad_check(lambda v: T.sum(T.square(T.avg_pool(v, 2))), x) < 1e-4
    assert grad_check(lambda v: T.sum(T.window_min(v, 3) * np.arange(64.0).reshape(2, 2, 4, 4)), x) < 1e-4


def test_window_min_matches_scan(rng):
    x = rng.random((1, 1, 6, 7))
    out = T.window_min(Tensor(x), 3).data[0, 0]
    xp = np.pad(x[0, 0], 1, mode="edge")
    ref = np.array([[xp[i:i + 3, j:j + 3].min() for j in range(7)] for i in range(6)])
    assert np.array_equal(out, ref)


def test_precision_switch():
    with T.precision("float32"):
        assert Tensor([1.0]).data.dtype == np.float32
    assert Tensor([1.0]).data.dtype == np.float64


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=4),
                  elements=st.floats(-3, 3)))
def test_sum_of_tanh_gradient_property(x):
    assert grad_check(lambda v: T.sum(T.tanh(v)), x) < 1e-4


def test_deterministic_forward_and_backward():
    def run():
        r = np.random.default_rng(3)
        layer = nn.Linear(5, 3, r)
        x = Tensor(r.standard_normal((4, 5)))
        loss = T.mean(T.tanh(layer(x)))
        loss.backward()
        return loss.data.copy(), layer.weight.grad.copy()

    (l1, g1), (l2, g2) = run(), run()
    assert l1 == l2 and np.array_equal(g1, g2)
