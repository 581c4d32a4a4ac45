from .augment import augment, hflip, random_resized_crop, resize_bilinear
from .dataset import (
    Dataset,
    concat,
    decode_container,
    encode_container,
    load_dataset,
    make_splits,
    split_train_val,
    write_container,
)
from .fewshot import FewShotSpec, sample_few_shot
from .synthetic import KINDS, make_synthetic_task

__all__ = [
    "Dataset",
    "FewShotSpec",
    "KINDS",
    "augment",
    "concat",
    "decode_container",
    "encode_container",
    "hflip",
    "load_dataset",
    "make_splits",
    "make_synthetic_task",
    "random_resized_crop",
    "resize_bilinear",
    "sample_few_shot",
    "split_train_val",
    "write_container",
]
