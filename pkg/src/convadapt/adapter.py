"""The convolutional adapter bottleneck and the additive feature modulation it feeds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ops
from .core.tensor import Parameter, Tensor, as_tensor
from .errors import ConfigurationError, DimensionError

NONLINEARITIES = ("relu", "gelu")
INIT_SCHEMES = ("zero_up", "kaiming_both")


@dataclass(frozen=True)
class AdapterConfig:
    gamma: int = 4
    kernel_size: int = 3
    nonlinearity: str = "relu"
    init_scheme: str = "zero_up"
    alpha_init: float = 1.0

    def __post_init__(self):
        if not isinstance(self.gamma, (int, np.integer)) or self.gamma < 1:
            raise ConfigurationError(f"gamma must be a positive integer, got {self.gamma!r}")
        ops.same_padding(self.kernel_size)
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigurationError(f"nonlinearity must be one of {NONLINEARITIES}, got {self.nonlinearity!r}")
        if self.init_scheme not in INIT_SCHEMES:
            raise ConfigurationError(f"init_scheme must be one of {INIT_SCHEMES}, got {self.init_scheme!r}")

    def replace(self, **changes) -> "AdapterConfig":
        fields = {**self.__dict__, **changes}
        return AdapterConfig(**fields)


def _check_divisible(c_in: int, gamma: int, where: str = "") -> None:
    if c_in % gamma:
        site = f" at {where}" if where else ""
        raise ConfigurationError(f"compression factor gamma={gamma} does not divide C_in={c_in}{site}")


def kaiming_uniform(shape: tuple, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def adapter_param_count(config: AdapterConfig, c_in: int, c_out: int, include_alpha: bool = True) -> int:
    """Trainable elements of one adapter: K·K·C_in + (C_in/γ)·C_out (+ C_out for α).

    ``include_alpha=False`` reproduces the α-free figure used in the
    closed-form parameter table.
    """
    _check_divisible(c_in, config.gamma)
    k = config.kernel_size
    count = k * k * c_in + (c_in // config.gamma) * c_out
    return count + c_out if include_alpha else count


class ConvAdapter:
    """Grouped K×K down-projection, nonlinearity, 1×1 up-projection, plus scale α.

    The down-projection has C_in/γ groups of width γ, so each bottleneck
    channel sees γ input channels over a K×K window. ``stride`` is only used
    when the host's output is spatially smaller than the adapter's input.
    """

    def __init__(
        self,
        c_in: int,
        c_out: int,
        config: AdapterConfig,
        rng: Optional[np.random.Generator] = None,
        name: str = "adapter",
        stride: int = 1,
        where: str = "",
    ):
        _check_divisible(c_in, config.gamma, where)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.c_in, self.c_out, self.config, self.stride, self.name = c_in, c_out, config, stride, name
        self.width = c_in // config.gamma
        k, g = config.kernel_size, config.gamma
        self.w_down = Parameter(kaiming_uniform((self.width, g, k, k), g * k * k, rng), f"{name}.w_down")
        if config.init_scheme == "zero_up":
            w_up = np.zeros((c_out, self.width, 1, 1), dtype=np.float32)
        else:
            w_up = kaiming_uniform((c_out, self.width, 1, 1), self.width, rng)
        self.w_up = Parameter(w_up, f"{name}.w_up")
        self.alpha = Parameter(np.full(c_out, config.alpha_init, dtype=np.float32), f"{name}.alpha")
        self._f = ops.activation(config.nonlinearity)

    def parameters(self) -> list:
        return [self.w_down, self.w_up, self.alpha]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def delta(self, z) -> Tensor:
        """Δh for input ``z`` of shape (N, C_in, H, W)."""
        z = as_tensor(z)
        if z.ndim != 4 or z.shape[1] != self.c_in:
            raise DimensionError(f"adapter {self.name}: input axis 1 must be C_in={self.c_in}; got shape {z.shape}")
        k = self.config.kernel_size
        mid = ops.conv2d(z, self.w_down, stride=self.stride, padding=k // 2, groups=self.width)
        return ops.conv2d(self._f(mid), self.w_up)

    __call__ = delta


def adapter_forward(adapter: ConvAdapter, z) -> Tensor:
    return adapter.delta(z)


def apply_modulation(h, delta_h, alpha) -> Tensor:
    """h + α ⊙ Δh with α broadcast over batch and spatial axes."""
    h, delta_h, alpha = as_tensor(h), as_tensor(delta_h), as_tensor(alpha)
    if h.shape != delta_h.shape:
        raise DimensionError(f"modulation: h shape {h.shape} differs from delta_h shape {delta_h.shape}")
    if h.ndim != 4 or alpha.shape != (h.shape[1],):
        raise DimensionError(f"modulation: alpha must have length C_out={h.shape[1] if h.ndim > 1 else '?'}; got {alpha.shape}")
    return ops.add(h, ops.mul(ops.reshape(alpha, (1, -1, 1, 1)), delta_h))
