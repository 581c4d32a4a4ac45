"""Bottleneck residual ConvNet with attachment points for the four adapting schemes."""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .adapter import AdapterConfig, ConvAdapter, apply_modulation, kaiming_uniform
from .core import checkpoint as ckpt
from .core import ops
from .core.tensor import Parameter, Tensor, as_tensor
from .errors import CheckpointError, ConfigurationError, DimensionError


class AttachScheme(str, enum.Enum):
    CONV_PARALLEL = "conv_parallel"
    CONV_SEQUENTIAL = "conv_sequential"
    RESIDUAL_PARALLEL = "residual_parallel"
    RESIDUAL_SEQUENTIAL = "residual_sequential"

    @classmethod
    def parse(cls, value: Union[str, "AttachScheme"]) -> "AttachScheme":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "convparallel": "conv_parallel",
            "convsequential": "conv_sequential",
            "residualparallel": "residual_parallel",
            "residualsequential": "residual_sequential",
        }
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown adapting scheme {value!r}; expected one of {[s.value for s in cls]}") from None


@dataclass(frozen=True)
class StageSpec:
    c_in: int
    c_mid: int
    c_out: int
    num_blocks: int
    stride: int = 1


@dataclass(frozen=True)
class BackboneConfig:
    stages: Tuple[StageSpec, ...]
    num_classes: int = 10
    input_channels: int = 3
    kernel_size: Union[int, Tuple[int, ...]] = 3
    nonlinearity: str = "relu"
    stem_kernel: int = 3
    stem_stride: int = 1

    def __post_init__(self):
        stages = tuple(s if isinstance(s, StageSpec) else StageSpec(*s) for s in self.stages)
        object.__setattr__(self, "stages", stages)
        if not stages:
            raise ConfigurationError("backbone needs at least one stage")
        if self.num_classes < 1 or self.input_channels < 1:
            raise ConfigurationError("num_classes and input_channels must be positive")
        for i, s in enumerate(stages):
            if min(s.c_in, s.c_mid, s.c_out, s.num_blocks, s.stride) < 1:
                raise ConfigurationError(f"stage {i}: channel counts, block count and stride must be positive")
            if i and s.c_in != stages[i - 1].c_out:
                raise ConfigurationError(
                    f"stage {i}: C_in={s.c_in} does not match C_out={stages[i - 1].c_out} of stage {i - 1}"
                )
        ks = self.stage_kernels()
        if len(ks) != len(stages):
            raise ConfigurationError(f"kernel_size lists {len(ks)} entries for {len(stages)} stages")
        for k in ks + (self.stem_kernel,):
            ops.same_padding(k)
        ops.activation(self.nonlinearity)

    def stage_kernels(self) -> Tuple[int, ...]:
        if isinstance(self.kernel_size, (int, np.integer)):
            return (int(self.kernel_size),) * len(self.stages)
        return tuple(int(k) for k in self.kernel_size)

    def block_specs(self) -> List[Tuple[int, int, int, int, int, int, int]]:
        """(stage, block, c_in, c_mid, c_out, stride, K) for every block in order."""
        out = []
        for s, (spec, k) in enumerate(zip(self.stages, self.stage_kernels())):
            for b in range(spec.num_blocks):
                c_in = spec.c_in if b == 0 else spec.c_out
                stride = spec.stride if b == 0 else 1
                out.append((s, b, c_in, spec.c_mid, spec.c_out, stride, k))
        return out


def desk_config(num_classes: int = 10, nonlinearity: str = "relu") -> BackboneConfig:
    """Default CPU-sized backbone: three stages of two bottleneck blocks, stride-2 stem."""
    return BackboneConfig(
        stages=(StageSpec(16, 8, 32, 2, 1), StageSpec(32, 16, 64, 2, 2), StageSpec(64, 32, 128, 2, 2)),
        num_classes=num_classes,
        nonlinearity=nonlinearity,
        stem_stride=2,
    )


def toy_config(num_classes: int = 4, nonlinearity: str = "relu") -> BackboneConfig:
    """Two single-block stages; small enough for exhaustive finite differences."""
    return BackboneConfig(
        stages=(StageSpec(16, 16, 32, 1, 1), StageSpec(32, 16, 64, 1, 2)),
        num_classes=num_classes,
        nonlinearity=nonlinearity,
    )


def resnet50_config(num_classes: int = 1000) -> BackboneConfig:
    """ResNet-50 channel/block layout (7×7 stride-2 stem; max-pool omitted)."""
    return BackboneConfig(
        stages=(
            StageSpec(64, 64, 256, 3, 1),
            StageSpec(256, 128, 512, 4, 2),
            StageSpec(512, 256, 1024, 6, 2),
            StageSpec(1024, 512, 2048, 3, 2),
        ),
        num_classes=num_classes,
        stem_kernel=7,
        stem_stride=2,
    )


class Conv:
    def __init__(self, name: str, c_in: int, c_out: int, k: int, stride: int, rng: np.random.Generator):
        self.weight = Parameter(kaiming_uniform((c_out, c_in, k, k), c_in * k * k, rng), f"{name}.weight")
        self.stride, self.padding = stride, k // 2

    def __call__(self, x) -> Tensor:
        return ops.conv2d(x, self.weight, stride=self.stride, padding=self.padding)


class BatchNorm:
    """Frozen-statistics batch norm; ``weight``/``bias`` are the affine terms."""

    def __init__(self, name: str, c: int, gain: float = 1.0):
        self.name = name
        self.weight = Parameter(np.full(c, gain, dtype=np.float32), f"{name}.weight")
        self.bias = Parameter(np.zeros(c, dtype=np.float32), f"{name}.bias")
        self.running_mean = np.zeros(c, dtype=np.float32)
        self.running_var = np.ones(c, dtype=np.float32)

    def __call__(self, x) -> Tensor:
        return ops.batchnorm2d(x, self.weight, self.bias, self.running_mean, self.running_var)


# Initial gain of each block's last batch norm; keeps the unnormalised residual
# stream from growing with depth at initialisation.
BRANCH_GAIN = 0.5


class Bottleneck:
    def __init__(self, prefix: str, c_in: int, c_mid: int, c_out: int, stride: int, k: int, act, rng):
        self.prefix, self.c_in, self.c_mid, self.c_out, self.stride, self.k = prefix, c_in, c_mid, c_out, stride, k
        self.act = act
        self.conv1 = Conv(f"{prefix}.conv1", c_in, c_mid, 1, 1, rng)
        self.bn1 = BatchNorm(f"{prefix}.bn1", c_mid)
        self.conv2 = Conv(f"{prefix}.conv2", c_mid, c_mid, k, stride, rng)
        self.bn2 = BatchNorm(f"{prefix}.bn2", c_mid)
        self.conv3 = Conv(f"{prefix}.conv3", c_mid, c_out, 1, 1, rng)
        self.bn3 = BatchNorm(f"{prefix}.bn3", c_out, gain=BRANCH_GAIN)
        self.downsample = None
        if stride != 1 or c_in != c_out:
            self.downsample = (Conv(f"{prefix}.downsample.conv", c_in, c_out, 1, stride, rng), BatchNorm(f"{prefix}.downsample.bn", c_out))

    def layers(self):
        out = [self.conv1, self.bn1, self.conv2, self.bn2, self.conv3, self.bn3]
        if self.downsample:
            out.extend(self.downsample)
        return out

    def adapter_shape(self, scheme: AttachScheme) -> Tuple[int, int, int]:
        """(C_in, C_out, stride) of the adapter this block hosts under ``scheme``."""
        if scheme is AttachScheme.CONV_PARALLEL:
            return self.c_mid, self.c_mid, self.stride
        if scheme is AttachScheme.CONV_SEQUENTIAL:
            return self.c_mid, self.c_mid, 1
        if scheme is AttachScheme.RESIDUAL_PARALLEL:
            return self.c_in, self.c_out, self.stride
        return self.c_out, self.c_out, 1

    def __call__(self, x, adapter: Optional[ConvAdapter] = None, scheme: Optional[AttachScheme] = None) -> Tensor:
        out = self.act(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(out))
        if scheme is AttachScheme.CONV_PARALLEL:
            h = apply_modulation(h, adapter(out), adapter.alpha)
        elif scheme is AttachScheme.CONV_SEQUENTIAL:
            h = apply_modulation(h, adapter(h), adapter.alpha)
        branch = self.bn3(self.conv3(self.act(h)))
        if scheme is AttachScheme.RESIDUAL_PARALLEL:
            branch = apply_modulation(branch, adapter(x), adapter.alpha)
        elif scheme is AttachScheme.RESIDUAL_SEQUENTIAL:
            branch = apply_modulation(branch, adapter(branch), adapter.alpha)
        shortcut = x if self.downsample is None else self.downsample[1](self.downsample[0](x))
        return self.act(ops.add(branch, shortcut))


class Backbone:
    """Stem, bottleneck stages, global pooling and a linear head."""

    def __init__(self, config: BackboneConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.act = ops.activation(config.nonlinearity)
        first = config.stages[0].c_in
        self.stem = (Conv("stem.conv", config.input_channels, first, config.stem_kernel, config.stem_stride, rng), BatchNorm("stem.bn", first))
        self.blocks: List[Bottleneck] = []
        for s, b, c_in, c_mid, c_out, stride, k in config.block_specs():
            self.blocks.append(Bottleneck(f"stage.{s}.block.{b}", c_in, c_mid, c_out, stride, k, self.act, rng))
        self.feature_dim = config.stages[-1].c_out
        self._make_head(config.num_classes)

    def _make_head(self, num_classes: int) -> None:
        self.head_weight = Parameter(np.zeros((num_classes, self.feature_dim), dtype=np.float32), "head.weight")
        self.head_bias = Parameter(np.zeros(num_classes, dtype=np.float32), "head.bias")

    @property
    def num_classes(self) -> int:
        return self.head_weight.shape[0]

    def replace_head(self, num_classes: int) -> None:
        """Swap in a fresh zero-initialised head for a new label set."""
        self._make_head(num_classes)

    # -- parameters -------------------------------------------------------
    def _layers(self):
        yield from self.stem
        for blk in self.blocks:
            yield from blk.layers()

    def backbone_parameters(self) -> Dict[str, Parameter]:
        out: Dict[str, Parameter] = {}
        for layer in self._layers():
            if isinstance(layer, Conv):
                out[layer.weight.name] = layer.weight
            else:
                out[layer.weight.name] = layer.weight
                out[layer.bias.name] = layer.bias
        return out

    def head_parameters(self) -> Dict[str, Parameter]:
        return {"head.weight": self.head_weight, "head.bias": self.head_bias}

    def named_parameters(self) -> Dict[str, Parameter]:
        return {**self.backbone_parameters(), **self.head_parameters()}

    def buffers(self) -> Dict[str, np.ndarray]:
        out = {}
        for layer in self._layers():
            if isinstance(layer, BatchNorm):
                out[f"{layer.name}.running_mean"] = layer.running_mean
                out[f"{layer.name}.running_var"] = layer.running_var
        return out

    def conv_weights(self) -> Dict[str, Parameter]:
        return {n: p for n, p in self.backbone_parameters().items() if p.ndim == 4}

    # -- forward ----------------------------------------------------------
    def features(self, x, adapters: Optional[Sequence[ConvAdapter]] = None, scheme: Optional[AttachScheme] = None) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[1] != self.config.input_channels:
            raise DimensionError(f"backbone input must be (N, {self.config.input_channels}, H, W); got {x.shape}")
        out = self.act(self.stem[1](self.stem[0](x)))
        for i, blk in enumerate(self.blocks):
            out = blk(out, adapters[i] if adapters else None, scheme)
        return ops.global_average_pool(out)

    def forward(self, x) -> Tensor:
        return ops.linear(self.features(x), self.head_weight, self.head_bias)

    __call__ = forward

    # -- state --------------------------------------------------------------
    def state_records(self) -> List[ckpt.CheckpointRecord]:
        recs = [ckpt.CheckpointRecord(n, p.data, p.trainable) for n, p in self.named_parameters().items()]
        recs += [ckpt.CheckpointRecord(n, b, False) for n, b in self.buffers().items()]
        return recs

    def load_records(self, records: Dict[str, ckpt.CheckpointRecord], strict: bool = True) -> None:
        params, bufs = self.named_parameters(), self.buffers()
        expected = set(params) | set(bufs)
        present = {n for n in records if not n.startswith("adapter.")}
        if strict and present != expected:
            raise CheckpointError(f"checkpoint layers differ from model: {sorted(present ^ expected)[:5]}")
        for name, rec in records.items():
            if name in params:
                target = params[name]
                if target.shape != rec.data.shape:
                    if name.startswith("head."):
                        self.replace_head(rec.data.shape[0])
                        target = self.named_parameters()[name]
                    else:
                        raise CheckpointError(f"{name}: shape {rec.data.shape} does not fit {target.shape}")
                target.data = np.array(rec.data, dtype=target.dtype)
            elif name in bufs:
                bufs[name][...] = rec.data

    def clone(self) -> "Backbone":
        return copy.deepcopy(self)

    def to_dtype(self, dtype) -> None:
        for p in self.named_parameters().values():
            p.data = p.data.astype(dtype)


def build_backbone(config: BackboneConfig, seed: int = 0) -> Backbone:
    """Deterministically initialised backbone with every parameter trainable."""
    return Backbone(config, seed)


class AdaptedModel:
    """A backbone with one convolutional adapter per residual block under a single scheme."""

    def __init__(self, backbone: Backbone, scheme: AttachScheme, config: AdapterConfig, seed: int = 0):
        self.backbone = backbone
        self.scheme = AttachScheme.parse(scheme)
        self.adapter_config = config
        rng = np.random.default_rng(seed + 7919)
        self.adapters: List[ConvAdapter] = []
        for i, blk in enumerate(backbone.blocks):
            c_in, c_out, stride = blk.adapter_shape(self.scheme)
            self.adapters.append(ConvAdapter(c_in, c_out, config, rng, name=f"adapter.{i}", stride=stride, where=f"block {i} ({blk.prefix})"))

    @property
    def config(self) -> BackboneConfig:
        return self.backbone.config

    @property
    def num_classes(self) -> int:
        return self.backbone.num_classes

    def adapter_parameters(self) -> Dict[str, Parameter]:
        return {p.name: p for a in self.adapters for p in a.parameters()}

    def backbone_parameters(self) -> Dict[str, Parameter]:
        return self.backbone.backbone_parameters()

    def head_parameters(self) -> Dict[str, Parameter]:
        return self.backbone.head_parameters()

    def named_parameters(self) -> Dict[str, Parameter]:
        return {**self.backbone.backbone_parameters(), **self.adapter_parameters(), **self.backbone.head_parameters()}

    def buffers(self) -> Dict[str, np.ndarray]:
        return self.backbone.buffers()

    def conv_weights(self) -> Dict[str, Parameter]:
        return self.backbone.conv_weights()

    def features(self, x) -> Tensor:
        return self.backbone.features(x, self.adapters, self.scheme)

    def forward(self, x) -> Tensor:
        return ops.linear(self.features(x), self.backbone.head_weight, self.backbone.head_bias)

    __call__ = forward

    def state_records(self) -> List[ckpt.CheckpointRecord]:
        recs = self.backbone.state_records()
        recs += [ckpt.CheckpointRecord(n, p.data, p.trainable) for n, p in self.adapter_parameters().items()]
        return recs

    def load_records(self, records: Dict[str, ckpt.CheckpointRecord], strict: bool = True) -> None:
        self.backbone.load_records(records, strict=strict)
        params = self.adapter_parameters()
        if strict and not set(params) <= set(records):
            raise CheckpointError(f"checkpoint lacks adapter records: {sorted(set(params) - set(records))[:5]}")
        for name, p in params.items():
            if name in records:
                if records[name].data.shape != p.shape:
                    raise CheckpointError(f"{name}: shape {records[name].data.shape} does not fit {p.shape}")
                p.data = np.array(records[name].data, dtype=p.dtype)

    def clone(self) -> "AdaptedModel":
        return copy.deepcopy(self)

    def to_dtype(self, dtype) -> None:
        for p in self.named_parameters().values():
            p.data = p.data.astype(dtype)


def attach_adapters(model: Backbone, scheme: Union[AttachScheme, str], config: AdapterConfig, seed: int = 0, copy_backbone: bool = True) -> AdaptedModel:
    """Insert one adapter into every residual block.

    The backbone is deep-copied unless ``copy_backbone`` is false, so training
    the adapted model never touches the caller's backbone object.
    """
    base = model.clone() if copy_backbone else model
    return AdaptedModel(base, AttachScheme.parse(scheme), config, seed=seed)
