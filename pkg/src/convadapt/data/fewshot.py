from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from .dataset import Dataset

ALLOWED_SHOTS = (1, 2, 4, 8)


@dataclass(frozen=True)
class FewShotSpec:
    shots: int
    seed: int = 0
    strict: bool = True  # restrict shots to the 1/2/4/8 protocol

    def __post_init__(self):
        if self.shots < 1 or (self.strict and self.shots not in ALLOWED_SHOTS):
            raise ConfigurationError(f"shots must be one of {ALLOWED_SHOTS}, got {self.shots}")


def sample_few_shot(dataset: Dataset, spec: FewShotSpec) -> Dataset:
    """Keep exactly ``spec.shots`` training samples per class, drawn without replacement.

    Non-train samples (val/test) pass through untouched.
    """
    rng = np.random.default_rng(spec.seed)
    train = dataset.indices("train")
    chosen = []
    for c in range(dataset.class_count):
        pool = train[dataset.labels[train] == c]
        if len(pool) < spec.shots:
            raise ConfigurationError(f"class {c} has {len(pool)} training samples, fewer than {spec.shots} shots")
        chosen.append(np.sort(rng.choice(pool, size=spec.shots, replace=False)))
    keep = np.concatenate(chosen + [np.flatnonzero(dataset.split != "train")])
    return dataset.take(keep)
