"""Tuning modes and the trainable set each one selects."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Set, Union

from ..adapter import AdapterConfig
from ..backbone import AdaptedModel, AttachScheme, Backbone
from ..errors import ConfigurationError


class ModeKind(str, enum.Enum):
    FULL = "full"
    LINEAR_PROBE = "linear_probe"
    BIAS = "bias"
    ADAPTER = "adapter"


_ALIASES = {
    "fullft": "full", "full_ft": "full", "ft": "full", "full": "full",
    "linearprobe": "linear_probe", "linear_probe": "linear_probe", "lp": "linear_probe",
    "bias": "bias", "biastuning": "bias", "bias_tuning": "bias",
    "adapter": "adapter",
}


@dataclass(frozen=True)
class TuningMode:
    kind: ModeKind
    scheme: Optional[AttachScheme] = None
    adapter: Optional[AdapterConfig] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModeKind(self.kind))
        if self.kind is ModeKind.ADAPTER:
            if self.scheme is None:
                raise ConfigurationError("adapter mode needs an adapting scheme")
            object.__setattr__(self, "scheme", AttachScheme.parse(self.scheme))
            if self.adapter is None:
                object.__setattr__(self, "adapter", AdapterConfig())

    @classmethod
    def full(cls) -> "TuningMode":
        return cls(ModeKind.FULL)

    @classmethod
    def linear_probe(cls) -> "TuningMode":
        return cls(ModeKind.LINEAR_PROBE)

    @classmethod
    def bias(cls) -> "TuningMode":
        return cls(ModeKind.BIAS)

    @classmethod
    def with_adapter(cls, scheme: Union[AttachScheme, str], config: Optional[AdapterConfig] = None) -> "TuningMode":
        return cls(ModeKind.ADAPTER, AttachScheme.parse(scheme), config or AdapterConfig())

    @classmethod
    def parse(cls, name: str, scheme: Optional[str] = None, config: Optional[AdapterConfig] = None) -> "TuningMode":
        key = _ALIASES.get(name.strip().lower().replace("-", "_"))
        if key is None:
            raise ConfigurationError(f"unknown tuning mode {name!r}")
        if key == "adapter":
            return cls.with_adapter(scheme or AttachScheme.CONV_PARALLEL, config)
        return cls(ModeKind(key))

    @property
    def label(self) -> str:
        if self.kind is ModeKind.ADAPTER:
            return f"adapter/{self.scheme.value}"
        return self.kind.value


def select_trainable(model: Union[Backbone, AdaptedModel], mode: TuningMode) -> Set[str]:
    """Set ``trainable`` on every parameter of ``model`` per ``mode``; return the trainable names."""
    params = model.named_parameters()
    head = set(model.head_parameters())
    backbone = set(model.backbone_parameters())
    if mode.kind is ModeKind.FULL:
        chosen = backbone | head
    elif mode.kind is ModeKind.LINEAR_PROBE:
        chosen = set(head)
    elif mode.kind is ModeKind.BIAS:
        chosen = {n for n in backbone if n.endswith(".bias")} | head
    else:
        if not isinstance(model, AdaptedModel):
            raise ConfigurationError("adapter mode needs a model with adapters attached (see attach_adapters)")
        if model.scheme is not mode.scheme:
            raise ConfigurationError(f"model carries {model.scheme.value} adapters but the mode asks for {mode.scheme.value}")
        chosen = set(model.adapter_parameters()) | head
    for name, p in params.items():
        p.trainable = name in chosen
    return chosen


def count_trainable_params(model: Union[Backbone, AdaptedModel], mode: Optional[TuningMode] = None) -> int:
    """Element count over the trainable set (applied first when ``mode`` is given)."""
    if mode is not None:
        select_trainable(model, mode)
    return sum(p.size for p in model.named_parameters().values() if p.trainable)
