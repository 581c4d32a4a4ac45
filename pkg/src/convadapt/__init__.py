"""Parameter-efficient tuning of small residual ConvNets with convolutional adapters, on numpy."""

from .adapter import AdapterConfig, ConvAdapter, adapter_forward, adapter_param_count, apply_modulation
from .backbone import (
    AdaptedModel,
    AttachScheme,
    Backbone,
    BackboneConfig,
    StageSpec,
    attach_adapters,
    build_backbone,
    desk_config,
    resnet50_config,
    toy_config,
)
from .tuning import TrainConfig, TuningMode, count_trainable_params, evaluate, grid_search, select_trainable, train

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "AdaptedModel",
    "AttachScheme",
    "Backbone",
    "BackboneConfig",
    "ConvAdapter",
    "StageSpec",
    "TrainConfig",
    "TuningMode",
    "adapter_forward",
    "adapter_param_count",
    "apply_modulation",
    "attach_adapters",
    "build_backbone",
    "count_trainable_params",
    "desk_config",
    "evaluate",
    "grid_search",
    "resnet50_config",
    "select_trainable",
    "toy_config",
    "train",
]
