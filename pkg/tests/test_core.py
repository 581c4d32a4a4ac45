import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from convadapt.core import ops
from convadapt.core.gradcheck import check_gradients, finite_difference_grad, relative_error
from convadapt.core.tensor import Parameter, Tensor, backward, make_output, no_grad, trace
from convadapt.errors import ConfigurationError, ContractError, DimensionError

from conftest import conv_reference

SEEDS = range(10)


def uniform(rng, shape):
    return rng.uniform(-1.0, 1.0, size=shape)


# -- conv2d forward -----------------------------------------------------------


def test_conv_unit_kernel_scales_input():
    out = ops.conv2d(np.ones((1, 1, 3, 3)), np.full((1, 1, 1, 1), 2.0))
    assert out.shape == (1, 1, 3, 3)
    assert np.all(out.data == 2.0)


def test_conv_zero_input_gives_bias(rng):
    w = uniform(rng, (6, 4, 3, 3))
    b = uniform(rng, (6,))
    out = ops.conv2d(np.zeros((2, 4, 5, 5)), w, b, padding=1)
    np.testing.assert_allclose(out.data, np.broadcast_to(b.astype(np.float32)[None, :, None, None], out.shape), atol=1e-7)
    assert np.all(ops.conv2d(np.zeros((2, 4, 5, 5)), w, padding=1).data == 0.0)


def test_conv_matches_nested_loop_reference(rng):
    x = uniform(rng, (2, 4, 5, 5))
    w = uniform(rng, (6, 4, 3, 3))
    out = ops.conv2d(x.astype(np.float32), w.astype(np.float32), padding=1)
    assert out.shape == (2, 6, 5, 5)
    assert np.max(np.abs(out.data - conv_reference(x.astype(np.float32), w.astype(np.float32), padding=1))) <= 1e-5


@given(
    seed=st.integers(0, 2**16),
    groups=st.sampled_from([1, 2, 4]),
    k=st.sampled_from([1, 3, 5]),
    stride=st.sampled_from([1, 2]),
    hw=st.integers(5, 8),
    with_bias=st.booleans(),
)
def test_conv_grouped_strided_matches_reference(seed, groups, k, stride, hw, with_bias):
    rng = np.random.default_rng(seed)
    c_in, c_out = 4, 8
    x = uniform(rng, (2, c_in, hw, hw)).astype(np.float32)
    w = uniform(rng, (c_out, c_in // groups, k, k)).astype(np.float32)
    b = uniform(rng, (c_out,)).astype(np.float32) if with_bias else None
    pad = k // 2
    out = ops.conv2d(x, w, b, stride=stride, padding=pad, groups=groups)
    ref = conv_reference(x, w, b, stride, pad, groups)
    assert out.shape == ref.shape
    assert np.max(np.abs(out.data - ref)) <= 1e-5


@given(seed=st.integers(0, 2**16), c=st.integers(1, 6), hw=st.integers(1, 6))
def test_depthwise_unit_kernel_is_identity(seed, c, hw):
    x = uniform(np.random.default_rng(seed), (2, c, hw, hw)).astype(np.float32)
    out = ops.conv2d(x, np.ones((c, 1, 1, 1)), groups=c)
    assert np.array_equal(out.data, x)


@given(seed=st.integers(0, 2**16), a=st.floats(-3, 3))
def test_conv_is_linear(seed, a):
    rng = np.random.default_rng(seed)
    x = uniform(rng, (2, 4, 6, 6)).astype(np.float32)
    w1 = uniform(rng, (4, 2, 3, 3)).astype(np.float32)
    w2 = uniform(rng, (4, 2, 3, 3)).astype(np.float32)
    conv = lambda xx, ww: ops.conv2d(xx, ww, padding=1, groups=2).data  # noqa: E731
    np.testing.assert_allclose(conv(np.float32(a) * x, w1), np.float32(a) * conv(x, w1), atol=1e-5)
    np.testing.assert_allclose(conv(x, w1 + w2), conv(x, w1) + conv(x, w2), atol=1e-5)


def test_same_padding_preserves_extent():
    for k in (1, 3, 5, 7):
        assert ops.conv2d(np.ones((1, 2, 9, 9)), np.ones((2, 2, k, k)), padding=ops.same_padding(k)).shape == (1, 2, 9, 9)
    with pytest.raises(ConfigurationError):
        ops.same_padding(4)


def test_conv_errors():
    with pytest.raises(DimensionError, match="4-D"):
        ops.conv2d(np.ones((2, 5, 5)), np.ones((1, 1, 1, 1)))
    with pytest.raises(ConfigurationError, match="does not divide input channels"):
        ops.conv2d(np.ones((1, 3, 5, 5)), np.ones((2, 1, 1, 1)), groups=2)
    with pytest.raises(ConfigurationError, match="does not divide output channels"):
        ops.conv2d(np.ones((1, 4, 5, 5)), np.ones((3, 2, 1, 1)), groups=2)
    with pytest.raises(DimensionError, match="axis 1"):
        ops.conv2d(np.ones((1, 4, 5, 5)), np.ones((2, 3, 1, 1)))


def test_conv_output_is_float32_and_on_tape():
    w = Parameter(np.ones((1, 1, 3, 3)), "w")
    out = ops.conv2d(np.ones((1, 1, 4, 4), dtype=np.float32), w, padding=1)
    assert out.dtype == np.float32
    assert out.requires_grad and out._record is not None
    with no_grad():
        assert ops.conv2d(np.ones((1, 1, 4, 4)), w, padding=1)._record is None


# -- backward -------------------------------------------------------------------


def test_backward_linear_function():
    x = np.array([1.5, -2.0, 0.25], dtype=np.float32)
    w = Parameter(np.array([0.3, 0.1, -0.7]), "w")
    backward(ops.sum(w * x))
    np.testing.assert_array_equal(w.grad, x)


def test_backward_relu_subgradient():
    w = Parameter(np.array([-1.0, 2.0]), "w")
    backward(ops.sum(ops.relu(w)))
    np.testing.assert_array_equal(w.grad, [0.0, 1.0])


def test_backward_requires_scalar():
    w = Parameter(np.ones(3), "w")
    with pytest.raises(ContractError):
        backward(w * 2.0)


def test_frozen_parameter_gets_no_grad():
    w = Parameter(np.ones(3), "w")
    frozen = Parameter(np.full(3, 2.0), "f", trainable=False)
    backward(ops.sum(w * frozen))
    assert frozen.grad is None
    np.testing.assert_array_equal(w.grad, [2.0, 2.0, 2.0])
    # a pre-existing buffer on a frozen tensor is neither allocated nor mutated
    sentinel = np.array([7.0, 7.0, 7.0], dtype=np.float32)
    frozen.grad = sentinel
    backward(ops.sum(w * frozen))
    assert frozen.grad is sentinel and np.all(sentinel == 7.0)


def test_gradients_accumulate_over_consumers():
    w = Parameter(np.array([3.0]), "w")
    # w is consumed three times: both factors of w*w, then the sum
    backward(ops.sum(w * w + w))
    np.testing.assert_allclose(w.grad, [7.0])


def test_backward_runs_in_reverse_execution_order():
    calls = []
    x = Parameter(np.array([1.0]), "x")

    def step(inp, tag):
        def bwd(g):
            calls.append(tag)
            return (g,)

        return make_output(inp.data.copy(), tag, (inp,), bwd)

    a = step(x, "a")
    b = step(a, "b")
    c = step(a, "c")  # a second consumer of a, recorded after b
    d = make_output(b.data + c.data, "d", (b, c), lambda g: (calls.append("d") or g, g))
    loss = step(d, "e")
    seqs = [r.seq for r in trace(loss)]
    assert seqs == sorted(seqs)
    backward(loss)
    assert calls == ["e", "d", "c", "b", "a"]
    np.testing.assert_allclose(x.grad, [2.0])


# -- finite differences -------------------------------------------------------------


def test_fd_quadratic():
    g = finite_difference_grad(lambda t: float((t.data**2).sum()), Tensor(np.array([3.0])), 1e-3)
    assert abs(g.data[0] - 6.0) <= 1e-6


@given(seed=st.integers(0, 2**16), n=st.integers(1, 6))
def test_fd_linear(seed, n):
    theta = Tensor(np.random.default_rng(seed).normal(size=n))
    g = finite_difference_grad(lambda t: float(t.data.sum()), theta, 1e-3)
    np.testing.assert_allclose(g.data, np.ones(n), atol=1e-9)


def test_fd_rejects_nonpositive_epsilon():
    with pytest.raises(ValueError):
        finite_difference_grad(lambda t: 0.0, Tensor(np.ones(1)), 0.0)


def _check_primitive(build, inputs, rng, tol=1e-3):
    """Compare backward() and central differences for sum(R ⊙ build(*inputs))."""
    tensors = [Tensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in inputs]
    out = build(*tensors)
    proj = rng.uniform(-1, 1, size=out.shape)
    backward(ops.sum(out * proj))
    worst = 0.0
    for i, t in enumerate(tensors):
        def f(theta, i=i):
            args = [theta if j == i else Tensor(tensors[j].data) for j in range(len(tensors))]
            return float(np.sum(build(*args).data * proj))

        num = finite_difference_grad(f, t, 1e-3).data
        worst = max(worst, float(relative_error(t.grad, num).max()))
    assert worst <= tol, worst
    return worst


def _away_from_zero(a, margin=1e-2):
    return np.where(np.abs(a) < margin, np.sign(a + 1e-12) * margin, a)


PRIMITIVES = {
    "conv2d": (lambda x, w, b: ops.conv2d(x, w, b, stride=1, padding=1), [(2, 4, 5, 5), (6, 4, 3, 3), (6,)]),
    "conv2d_grouped_strided": (lambda x, w: ops.conv2d(x, w, stride=2, padding=1, groups=2), [(2, 4, 6, 6), (4, 2, 3, 3)]),
    "conv2d_pointwise": (lambda x, w: ops.conv2d(x, w), [(2, 3, 4, 4), (5, 3, 1, 1)]),
    "relu": (ops.relu, [(3, 7)]),
    "gelu": (ops.gelu, [(3, 7)]),
    "batchnorm2d": (
        lambda x, w, b: ops.batchnorm2d(x, w, b, np.array([0.1, -0.2, 0.3]), np.array([0.5, 1.5, 2.0])),
        [(2, 3, 4, 4), (3,), (3,)],
    ),
    "global_average_pool": (ops.global_average_pool, [(2, 3, 4, 5)]),
    "linear": (ops.linear, [(4, 6), (3, 6), (3,)]),
    "add_broadcast": (ops.add, [(2, 3, 4), (3, 1)]),
    "sub_broadcast": (ops.sub, [(2, 3), (3,)]),
    "mul_broadcast": (ops.mul, [(2, 3, 2, 2), (1, 3, 1, 1)]),
    "reshape": (lambda x: ops.reshape(x, (6, 4)), [(2, 3, 4)]),
    "mean": (ops.mean, [(3, 5)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
@pytest.mark.parametrize("seed", SEEDS)
def test_primitive_gradients_match_finite_differences(name, seed):
    rng = np.random.default_rng(seed)
    build, shapes = PRIMITIVES[name]
    inputs = [uniform(rng, s) for s in shapes]
    if name == "relu":
        inputs = [_away_from_zero(inputs[0])]
    _check_primitive(build, inputs, rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_cross_entropy_gradient(seed):
    rng = np.random.default_rng(seed)
    logits = Tensor(uniform(rng, (5, 4)), requires_grad=True)
    labels = rng.integers(0, 4, size=5)
    backward(ops.softmax_cross_entropy(logits, labels))
    num = finite_difference_grad(lambda t: float(ops.softmax_cross_entropy(t, labels).data), logits)
    assert relative_error(logits.grad, num.data).max() <= 1e-3


@pytest.mark.parametrize("seed", SEEDS)
def test_composed_conv_activation_graph(seed):
    rng = np.random.default_rng(seed)
    w1 = Parameter(uniform(rng, (4, 3, 3, 3)), "w1")
    w2 = Parameter(uniform(rng, (2, 2, 3, 3)), "w2")
    w3 = Parameter(uniform(rng, (3, 2)), "w3")
    x = uniform(rng, (2, 3, 6, 6))
    labels = rng.integers(0, 3, size=2)
    for p in (w1, w2, w3):
        p.data = p.data.astype(np.float64)

    def loss():
        h = ops.relu(ops.conv2d(x, w1, padding=1))
        h = ops.gelu(ops.conv2d(h, w2, stride=2, padding=1, groups=2))
        return ops.softmax_cross_entropy(ops.linear(ops.global_average_pool(h), w3), labels)

    res = check_gradients(loss, [w1, w2, w3])
    assert res.checked > 0.9 * (w1.size + w2.size + w3.size)
    assert res.passed(1e-3), res.per_param


@given(seed=st.integers(0, 2**16))
def test_forward_outputs_finite(seed):
    rng = np.random.default_rng(seed)
    x = uniform(rng, (2, 4, 5, 5)) * 1e3
    h = ops.gelu(ops.conv2d(x, uniform(rng, (4, 4, 3, 3)), padding=1))
    h = ops.batchnorm2d(h, np.ones(4), np.zeros(4), np.zeros(4), np.ones(4))
    out = ops.softmax_cross_entropy(ops.linear(ops.global_average_pool(ops.relu(h)), uniform(rng, (3, 4))), [0, 2])
    assert np.all(np.isfinite(h.data)) and np.isfinite(out.data)


def test_tensor_shape_invariants():
    t = Tensor([[1, 2], [3, 4]])
    assert t.dtype == np.float32 and t.size == np.prod(t.shape)
    p = Parameter(np.zeros((2, 2)), "p")
    backward(ops.sum(p * t))
    assert p.grad.shape == p.shape
    p.trainable = False
    assert p.grad is None and not p.requires_grad
