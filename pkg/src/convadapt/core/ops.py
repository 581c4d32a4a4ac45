"""Differentiable primitives.

Outputs keep the storage dtype of their inputs (float32 normally, float64 under
the gradient checker). Convolutions and reductions accumulate in float64.
"""

from __future__ import annotations

import contextvars
import math

import numpy as np
from scipy.special import erf

from ..errors import ConfigurationError, DimensionError
from .tensor import Tensor, as_tensor, make_output

ACC = np.float64

# When set to a list, relu appends its active mask (used by the gradient checker).
_relu_monitor: contextvars.ContextVar = contextvars.ContextVar("relu_monitor", default=None)


def _out_dtype(*tensors: Tensor):
    return np.result_type(*(t.data.dtype for t in tensors))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)), dtype=ACC)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True, dtype=ACC)
    return g.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    out = (a.data + b.data).astype(_out_dtype(a, b), copy=False)

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return make_output(out, "add", (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    out = (a.data - b.data).astype(_out_dtype(a, b), copy=False)

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            -_unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return make_output(out, "sub", (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    out = (a.data * b.data).astype(_out_dtype(a, b), copy=False)

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return make_output(out, "mul", (a, b), backward)


def sum(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    out = np.asarray(x.data.sum(dtype=ACC), dtype=x.dtype)

    def backward(g):
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return make_output(out, "sum", (x,), backward)


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.size
    out = np.asarray(x.data.sum(dtype=ACC) / n, dtype=x.dtype)

    def backward(g):
        return (np.full(x.shape, g / n, dtype=x.dtype),)

    return make_output(out, "mean", (x,), backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def backward(g):
        return (g.reshape(x.shape),)

    return make_output(out, "reshape", (x,), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    monitor = _relu_monitor.get()
    if monitor is not None:
        monitor.append(mask)
    out = np.maximum(x.data, 0)

    def backward(g):
        return ((g * mask).astype(x.dtype),)

    return make_output(out, "relu", (x,), backward)


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x) -> Tensor:
    """Exact (erf-based) GELU."""
    x = as_tensor(x)
    xd = x.data.astype(ACC)
    cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))
    out = (xd * cdf).astype(x.dtype)

    def backward(g):
        pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT2PI
        return ((g * (cdf + xd * pdf)).astype(x.dtype),)

    return make_output(out, "gelu", (x,), backward)


ACTIVATIONS = {"relu": relu, "gelu": gelu}


def activation(name: str):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ConfigurationError(f"unknown nonlinearity {name!r}; expected one of {sorted(ACTIVATIONS)}") from None


def same_padding(kernel_size: int) -> int:
    """Padding that preserves spatial size at stride 1. Even kernels are rejected."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ConfigurationError(f"kernel size must be a positive odd integer, got {kernel_size}")
    return kernel_size // 2


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """Grouped 2-D cross-correlation (no kernel flip).

    ``x`` is (N, C_in, H, W) and ``weight`` is (C_out, C_in/groups, Kh, Kw).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4:
        raise DimensionError(f"conv2d: input must be 4-D (N, C, H, W); got shape {x.shape}")
    if weight.ndim != 4:
        raise DimensionError(f"conv2d: weight must be 4-D (C_out, C_in/groups, Kh, Kw); got shape {weight.shape}")
    if groups < 1 or stride < 1 or padding < 0:
        raise ConfigurationError(f"conv2d: invalid groups={groups}, stride={stride}, padding={padding}")
    n, c_in, h, w = x.shape
    c_out, cg, kh, kw = weight.shape
    if c_in % groups:
        raise ConfigurationError(f"conv2d: groups={groups} does not divide input channels C_in={c_in}")
    if c_out % groups:
        raise ConfigurationError(f"conv2d: groups={groups} does not divide output channels C_out={c_out}")
    if cg != c_in // groups:
        raise DimensionError(
            f"conv2d: weight axis 1 (C_in/groups) is {cg} but input axis 1 (C_in={c_in}) / groups={groups} is {c_in // groups}"
        )
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise DimensionError(f"conv2d: bias axis 0 must equal C_out={c_out}; got shape {bias.shape}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if hp < kh or wp < kw:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than padded input axes (H, W)=({hp}, {wp})")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    og = c_out // groups
    out_dtype = _out_dtype(x, weight) if bias is None else _out_dtype(x, weight, bias)

    # Channel-major im2col: cols[c, i, j, n, y, x] = xpad[n, c, y*stride + i, x*stride + j].
    xt = x.data.transpose(1, 0, 2, 3)
    if padding:
        xt = np.pad(xt, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((c_in, kh, kw, n, ho, wo), dtype=ACC)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    cols = cols.reshape(groups, cg * kh * kw, n * ho * wo)
    wmat = weight.data.astype(ACC).reshape(groups, og, cg * kh * kw)
    res = np.matmul(wmat, cols).reshape(c_out, n, ho, wo)
    if bias is not None:
        res += bias.data.astype(ACC)[:, None, None, None]
    out = res.transpose(1, 0, 2, 3).astype(out_dtype)

    def backward(g):
        gt = g.transpose(1, 0, 2, 3).astype(ACC).reshape(groups, og, n * ho * wo)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.matmul(gt, cols.transpose(0, 2, 1)).reshape(weight.shape).astype(weight.dtype)
        if x.requires_grad:
            gcols = np.matmul(wmat.transpose(0, 2, 1), gt).reshape(c_in, kh, kw, n, ho, wo)
            gxt = np.zeros((c_in, n, hp, wp), dtype=ACC)
            for i in range(kh):
                for j in range(kw):
                    gxt[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[:, i, j]
            if padding:
                gxt = gxt[:, :, padding : padding + h, padding : padding + w]
            gx = gxt.transpose(1, 0, 2, 3).astype(x.dtype)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3), dtype=ACC).astype(bias.dtype)
        return (gx, gw) if bias is None else (gx, gw, gb)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return make_output(out, "conv2d", inputs, backward)


def batchnorm2d(x, weight, bias, running_mean: np.ndarray, running_var: np.ndarray, eps: float = 1e-5) -> Tensor:
    """Inference-mode batch norm with fixed running statistics.

    Only the affine terms (``weight``, ``bias``) can receive gradients.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    c = x.shape[1]
    if weight.shape != (c,) or bias.shape != (c,) or np.shape(running_mean) != (c,) or np.shape(running_var) != (c,):
        raise DimensionError(f"batchnorm2d: channel axis 1 of input is {c}; affine/statistics vectors must have length {c}")
    dtype = _out_dtype(x, weight, bias)
    inv_std = 1.0 / np.sqrt(np.asarray(running_var, dtype=ACC) + eps)
    scale = weight.data.astype(ACC) * inv_std
    shift = bias.data.astype(ACC) - np.asarray(running_mean, dtype=ACC) * scale
    out = x.data * scale.astype(dtype)[None, :, None, None] + shift.astype(dtype)[None, :, None, None]

    def backward(g):
        gx = gw = gb = None
        if x.requires_grad:
            gx = (g * scale.astype(g.dtype)[None, :, None, None]).astype(x.dtype)
        if weight.requires_grad:
            xhat = (x.data - np.asarray(running_mean, dtype=x.dtype)[None, :, None, None]) * inv_std.astype(x.dtype)[None, :, None, None]
            gw = (g * xhat).sum(axis=(0, 2, 3), dtype=ACC).astype(weight.dtype)
        if bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3), dtype=ACC).astype(bias.dtype)
        return gx, gw, gb

    return make_output(out, "batchnorm2d", (x, weight, bias), backward)


def global_average_pool(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"global_average_pool: input must be 4-D (N, C, H, W); got shape {x.shape}")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), dtype=ACC).astype(x.dtype)

    def backward(g):
        return (np.broadcast_to((g / (h * w))[:, :, None, None], x.shape).astype(x.dtype),)

    return make_output(out, "global_average_pool", (x,), backward)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` shaped (out_features, in_features)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise DimensionError(f"linear: input axis 1 ({x.shape}) must match weight axis 1 ({weight.shape})")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"linear: bias axis 0 must equal out_features={weight.shape[0]}; got {bias.shape}")
    xd, wd = x.data.astype(ACC), weight.data.astype(ACC)
    res = xd @ wd.T
    if bias is not None:
        res = res + bias.data.astype(ACC)
    out_dtype = _out_dtype(x, weight) if bias is None else _out_dtype(x, weight, bias)
    out = res.astype(out_dtype)

    def backward(g):
        gd = g.astype(ACC)
        gx = (gd @ wd).astype(x.dtype) if x.requires_grad else None
        gw = (gd.T @ xd).astype(weight.dtype) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        gb = gd.sum(axis=0).astype(bias.dtype) if bias.requires_grad else None
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return make_output(out, "linear", inputs, backward)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under softmax(``logits``)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"softmax_cross_entropy: logits {logits.shape} and labels {labels.shape} disagree on axis 0")
    n, k = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DimensionError(f"softmax_cross_entropy: labels must lie in [0, {k})")
    z = logits.data.astype(ACC)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].sum() / n
    out = np.asarray(loss, dtype=logits.dtype)

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return ((p * (float(g) / n)).astype(logits.dtype),)

    return make_output(out, "softmax_cross_entropy", (logits,), backward)
