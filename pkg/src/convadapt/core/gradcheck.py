"""Central finite differences as an independent oracle for :func:`backward`."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import ops
from .tensor import Parameter, Tensor, backward, no_grad


def finite_difference_grad(f: Callable[[Tensor], float], theta: Tensor, epsilon: float = 1e-3) -> Tensor:
    """Estimate d f / d theta coordinate-wise as (f(θ+εe_i) − f(θ−εe_i)) / 2ε.

    ``f`` receives a float64 tensor and must return a scalar.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    base = np.array(theta.data, dtype=np.float64)
    grad = np.empty_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        f_plus = _scalar(f(Tensor(base)))
        flat[i] = orig - epsilon
        f_minus = _scalar(f(Tensor(base)))
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * epsilon)
    return Tensor(grad)


def _scalar(v) -> float:
    if isinstance(v, Tensor):
        return float(np.asarray(v.data, dtype=np.float64).reshape(()))
    return float(v)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Element-wise |a − n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


@contextlib.contextmanager
def _watch_relu():
    masks: list = []
    token = ops._relu_monitor.set(masks)
    try:
        yield masks
    finally:
        ops._relu_monitor.reset(token)


def _same_masks(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped: int
    per_param: dict = field(default_factory=dict)

    def passed(self, tol: float = 1e-3) -> bool:
        return self.checked > 0 and self.max_rel_error <= tol


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Iterable[Parameter],
    epsilon: float = 1e-3,
    floor: float = 1e-6,
    skip_kinks: bool = True,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckResult:
    """Compare reverse-mode gradients of ``loss_fn()`` with central differences.

    Parameters are perturbed in place, so they should be float64 for the
    comparison to be meaningful. With ``skip_kinks`` a coordinate is left out
    when a ±ε step flips any ReLU's active set, since the loss is not
    differentiable across that interval. ``max_coords`` subsamples coordinates
    per parameter.
    """
    params = list(params)
    for p in params:
        p.grad = None
    loss = loss_fn()
    backward(loss)
    analytic = {p.name or str(i): (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for i, p in enumerate(params)}
    with no_grad(), _watch_relu() as base_masks:
        loss_fn()
    base_masks = list(base_masks)

    worst, checked, skipped = 0.0, 0, 0
    per_param = {}
    for i, p in enumerate(params):
        key = p.name or str(i)
        if not p.data.flags.c_contiguous:
            p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, size=max_coords, replace=False)
        p_worst = 0.0
        for j in idx:
            orig = flat[j]
            flat[j] = orig + epsilon
            with no_grad(), _watch_relu() as m_plus:
                f_plus = _scalar(loss_fn())
            flat[j] = orig - epsilon
            with no_grad(), _watch_relu() as m_minus:
                f_minus = _scalar(loss_fn())
            flat[j] = orig
            if skip_kinks and not (_same_masks(base_masks, m_plus) and _same_masks(base_masks, m_minus)):
                skipped += 1
                continue
            num = (f_plus - f_minus) / (2.0 * epsilon)
            err = float(relative_error(analytic[key].reshape(-1)[j], num, floor))
            p_worst = max(p_worst, err)
            checked += 1
        per_param[key] = p_worst
        worst = max(worst, p_worst)
    for p in params:
        p.grad = None
    return GradCheckResult(worst, checked, skipped, per_param)
