"""AdamW with decoupled weight decay and a warmup-then-cosine learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable

import numpy as np

from ..core.tensor import Parameter
from ..errors import DivergenceError


def cosine_warmup_lr(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear ramp ``base_lr·(step+1)/warmup_steps`` then half-cosine decay to zero."""
    if step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    progress = (step - warmup_steps) / span
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def decays(p: Parameter, decay_alpha: bool = False) -> bool:
    """Weight decay applies to weight tensors (rank ≥ 2) only, and optionally to α."""
    if p.ndim >= 2:
        return True
    return decay_alpha and p.name.endswith(".alpha")


@dataclass
class AdamWState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    params: Iterable[Parameter],
    state: AdamWState,
    lr: float,
    weight_decay: float = 0.0,
    betas=(0.9, 0.999),
    eps: float = 1e-8,
    decay_alpha: bool = False,
) -> None:
    """One AdamW update over every trainable parameter that holds a gradient."""
    b1, b2 = betas
    live = [p for p in params if p.trainable and p.grad is not None]
    for p in live:
        if not np.all(np.isfinite(p.grad)):
            raise DivergenceError(f"non-finite gradient in parameter {p.name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p in live:
        g = p.grad.astype(np.float64)
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros(p.shape, dtype=np.float64)
            state.v[p.name] = np.zeros(p.shape, dtype=np.float64)
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w = p.data.astype(np.float64)
        if weight_decay and decays(p, decay_alpha):
            w *= 1.0 - lr * weight_decay
        w -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data = w.astype(p.dtype)
