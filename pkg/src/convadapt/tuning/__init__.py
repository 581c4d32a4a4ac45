from .counting import block_conv_count, closed_form_count, fraction_of_full, table_block_count
from .loop import (
    DEFAULT_LR_GRID,
    DEFAULT_WD_GRID,
    GridResult,
    Metrics,
    TrainConfig,
    Trial,
    evaluate,
    grid_search,
    predict,
    train,
)
from .modes import ModeKind, TuningMode, count_trainable_params, select_trainable
from .optim import AdamWState, adamw_step, cosine_warmup_lr

__all__ = [
    "AdamWState",
    "DEFAULT_LR_GRID",
    "DEFAULT_WD_GRID",
    "GridResult",
    "Metrics",
    "ModeKind",
    "TrainConfig",
    "Trial",
    "TuningMode",
    "adamw_step",
    "block_conv_count",
    "closed_form_count",
    "cosine_warmup_lr",
    "count_trainable_params",
    "evaluate",
    "fraction_of_full",
    "grid_search",
    "predict",
    "select_trainable",
    "table_block_count",
    "train",
]
