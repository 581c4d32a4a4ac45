import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from convadapt.adapter import AdapterConfig, ConvAdapter, adapter_forward, adapter_param_count, apply_modulation
from convadapt.core import ops
from convadapt.core.gradcheck import check_gradients
from convadapt.core.tensor import Parameter, Tensor
from convadapt.errors import ConfigurationError, DimensionError

from conftest import conv_reference


def test_config_validation():
    with pytest.raises(ConfigurationError):
        AdapterConfig(kernel_size=4)
    with pytest.raises(ConfigurationError):
        AdapterConfig(gamma=0)
    with pytest.raises(ConfigurationError):
        AdapterConfig(nonlinearity="tanh")
    with pytest.raises(ConfigurationError):
        AdapterConfig(init_scheme="xavier")
    with pytest.raises(ConfigurationError, match="does not divide C_in=6"):
        ConvAdapter(6, 6, AdapterConfig(gamma=4))


def test_parameter_shapes_and_alpha_init():
    a = ConvAdapter(16, 32, AdapterConfig(gamma=4, kernel_size=5, alpha_init=0.25))
    assert a.w_down.shape == (4, 4, 5, 5)
    assert a.w_up.shape == (32, 4, 1, 1)
    assert a.alpha.shape == (32,) and np.all(a.alpha.data == np.float32(0.25))
    assert all(p.trainable for p in a.parameters())
    assert a.w_down.size == 16 * 5 * 5
    assert np.all(a.w_up.data == 0.0)
    b = ConvAdapter(16, 32, AdapterConfig(gamma=4, init_scheme="kaiming_both"))
    assert np.any(b.w_up.data != 0.0)


def test_zero_up_gives_zero_delta(rng):
    a = ConvAdapter(8, 12, AdapterConfig(gamma=2))
    z = rng.normal(size=(2, 8, 6, 6)).astype(np.float32)
    assert np.all(adapter_forward(a, z).data == 0.0)


def test_scalar_pipeline():
    a = ConvAdapter(1, 1, AdapterConfig(gamma=1, kernel_size=1))
    a.w_down.data[...] = 1.0
    a.w_up.data[...] = 1.0
    z = np.array([-2.0, 3.0], dtype=np.float32).reshape(1, 1, 1, 2)
    np.testing.assert_array_equal(adapter_forward(a, z).data.reshape(-1), [0.0, 3.0])


@pytest.mark.parametrize("nonlinearity", ["relu", "gelu"])
def test_matches_composed_reference(rng, nonlinearity):
    cfg = AdapterConfig(gamma=2, kernel_size=3, nonlinearity=nonlinearity, init_scheme="kaiming_both")
    a = ConvAdapter(4, 8, cfg, np.random.default_rng(5))
    z = rng.normal(size=(1, 4, 5, 5)).astype(np.float32)
    mid = conv_reference(z, a.w_down.data, padding=1, groups=2)
    mid = np.maximum(mid, 0) if nonlinearity == "relu" else ops.gelu(Tensor(mid)).data
    ref = conv_reference(mid, a.w_up.data)
    out = adapter_forward(a, z)
    assert out.shape == (1, 8, 5, 5)
    assert np.max(np.abs(out.data - ref)) <= 1e-5


def test_channel_mismatch_is_dimension_error():
    a = ConvAdapter(4, 4, AdapterConfig(gamma=2))
    with pytest.raises(DimensionError, match="C_in=4"):
        a(np.zeros((1, 3, 5, 5), dtype=np.float32))


@given(
    seed=st.integers(0, 2**16),
    gamma=st.sampled_from([1, 2, 4]),
    k=st.sampled_from([1, 3, 5, 7]),
    hw=st.integers(1, 9),
)
def test_spatial_extent_preserved(seed, gamma, k, hw):
    a = ConvAdapter(8, 6, AdapterConfig(gamma=gamma, kernel_size=k, init_scheme="kaiming_both"), np.random.default_rng(seed))
    z = np.random.default_rng(seed).normal(size=(2, 8, hw, hw)).astype(np.float32)
    assert a(z).shape == (2, 6, hw, hw)


@given(seed=st.integers(0, 2**16), k=st.sampled_from([1, 3, 5]))
def test_receptive_field_is_k_by_k(seed, k):
    rng = np.random.default_rng(seed)
    a = ConvAdapter(4, 4, AdapterConfig(gamma=2, kernel_size=k, init_scheme="kaiming_both", nonlinearity="gelu"), rng)
    z = rng.normal(size=(1, 4, 9, 9)).astype(np.float32)
    base = a(z).data
    r = k // 2
    cy = cx = 4
    changed = np.zeros((9, 9), dtype=bool)
    for y in range(9):
        for x in range(9):
            zz = z.copy()
            zz[0, :, y, x] += 5.0
            changed[y, x] = not np.array_equal(a(zz).data[0, :, cy, cx], base[0, :, cy, cx])
    inside = np.zeros((9, 9), dtype=bool)
    inside[cy - r : cy + r + 1, cx - r : cx + r + 1] = True
    assert not np.any(changed & ~inside)
    assert np.all(changed[inside])


def test_modulation_examples():
    h = Tensor(np.ones((1, 2, 1, 1), dtype=np.float32))
    dh = Tensor(np.full((1, 2, 1, 1), 3.0, dtype=np.float32))
    out = apply_modulation(h, dh, Parameter(np.array([2.0, 0.0]), "alpha"))
    np.testing.assert_array_equal(out.data.reshape(-1), [7.0, 1.0])
    rng = np.random.default_rng(0)
    hh = rng.normal(size=(2, 3, 4, 4)).astype(np.float32)
    assert np.array_equal(apply_modulation(hh, rng.normal(size=hh.shape).astype(np.float32), np.zeros(3, np.float32)).data, hh)
    assert np.all(apply_modulation(hh, -hh, np.ones(3, np.float32)).data == 0.0)


def test_modulation_shape_errors():
    with pytest.raises(DimensionError):
        apply_modulation(np.zeros((1, 2, 3, 3)), np.zeros((1, 2, 3, 2)), np.ones(2))
    with pytest.raises(DimensionError):
        apply_modulation(np.zeros((1, 2, 3, 3)), np.zeros((1, 2, 3, 3)), np.ones(3))


def test_param_count_examples():
    assert adapter_param_count(AdapterConfig(gamma=4, kernel_size=3), 64, 64) == 576 + 1024 + 64 == 1664
    c = 24
    for k in (1, 3, 5):
        assert adapter_param_count(AdapterConfig(gamma=1, kernel_size=k), c, c) == k * k * c + c * c + c
        # the α-free figure reproduces the table's two terms
        assert adapter_param_count(AdapterConfig(gamma=1, kernel_size=k), c, c, include_alpha=False) == k * k * c + c * c
    assert adapter_param_count(AdapterConfig(gamma=16, kernel_size=1), 16, 1) == 16 + 1 + 1
    with pytest.raises(ConfigurationError):
        adapter_param_count(AdapterConfig(gamma=4), 6, 6)


@pytest.mark.parametrize("gamma", [1, 2, 4, 8])
@pytest.mark.parametrize("k", [1, 3, 5, 7])
@pytest.mark.parametrize("c", [8, 16, 64])
def test_param_count_matches_enumeration(gamma, k, c):
    cfg = AdapterConfig(gamma=gamma, kernel_size=k)
    for c_out in (c, 2 * c):
        a = ConvAdapter(c, c_out, cfg)
        assert a.num_parameters() == sum(p.size for p in a.parameters()) == adapter_param_count(cfg, c, c_out)


@pytest.mark.parametrize("seed", range(10))
def test_adapter_l2_loss_gradients(seed):
    rng = np.random.default_rng(seed)
    a = ConvAdapter(4, 6, AdapterConfig(gamma=2, kernel_size=3, init_scheme="kaiming_both", nonlinearity="gelu"), rng)
    for p in a.parameters():
        p.data = rng.uniform(-1, 1, size=p.shape)
    z = rng.uniform(-1, 1, size=(2, 4, 5, 5))
    h = rng.uniform(-1, 1, size=(2, 6, 5, 5))
    target = rng.uniform(-1, 1, size=(2, 6, 5, 5))

    def loss():
        d = ops.sub(apply_modulation(h, a(z), a.alpha), target)
        return ops.mean(ops.mul(d, d))

    res = check_gradients(loss, a.parameters())
    assert res.checked == sum(p.size for p in a.parameters())
    assert res.passed(1e-3), res.per_param
