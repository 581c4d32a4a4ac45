"""Finite-difference suites shared by the ``gradcheck`` command and the test-suite."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .adapter import AdapterConfig
from .backbone import AttachScheme, attach_adapters, build_backbone, toy_config
from .core import ops
from .core.gradcheck import check_gradients
from .core.tensor import Parameter
from .tuning.modes import TuningMode, select_trainable

TOLERANCE = 1e-3
EPSILON = 1e-3
SMOOTH_EPSILON = 1e-4


def _bn(x, w, b):
    return ops.batchnorm2d(x, w, b, np.array([0.1, -0.2, 0.3]), np.array([0.5, 1.5, 2.0]))


# name -> (op, input shapes); every input is differentiated
PRIMITIVES: Dict[str, Tuple[Callable, List[tuple]]] = {
    "conv2d": (lambda x, w, b: ops.conv2d(x, w, b, stride=1, padding=1), [(2, 4, 5, 5), (6, 4, 3, 3), (6,)]),
    "conv2d_grouped_strided": (lambda x, w: ops.conv2d(x, w, stride=2, padding=1, groups=2), [(2, 4, 6, 6), (4, 2, 3, 3)]),
    "conv2d_depthwise_k5": (lambda x, w: ops.conv2d(x, w, padding=2, groups=3), [(1, 3, 6, 6), (3, 1, 5, 5)]),
    "conv2d_pointwise": (lambda x, w: ops.conv2d(x, w), [(2, 3, 4, 4), (5, 3, 1, 1)]),
    "relu": (ops.relu, [(3, 7)]),
    "gelu": (ops.gelu, [(3, 7)]),
    "batchnorm2d": (_bn, [(2, 3, 4, 4), (3,), (3,)]),
    "global_average_pool": (ops.global_average_pool, [(2, 3, 4, 5)]),
    "linear": (ops.linear, [(4, 6), (3, 6), (3,)]),
    "add_broadcast": (ops.add, [(2, 3, 4), (3, 1)]),
    "mul_broadcast": (ops.mul, [(2, 3, 2, 2), (1, 3, 1, 1)]),
    "mean": (ops.mean, [(3, 5)]),
}


@dataclass
class SuiteResult:
    suite: str
    case: str
    seed: int
    max_rel_error: float
    checked: int
    skipped: int

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error <= TOLERANCE

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "case": self.case,
            "seed": self.seed,
            "max_rel_error": float(f"{self.max_rel_error:.6g}"),
            "checked": self.checked,
            "skipped": self.skipped,
            "passed": self.passed,
        }


def primitive_case(name: str, seed: int) -> SuiteResult:
    """Gradient of a random projection ⟨R, op(inputs)⟩ against central differences."""
    rng = np.random.default_rng(seed)
    op, shapes = PRIMITIVES[name]
    params = [Parameter(np.zeros(1), f"in{i}") for i in range(len(shapes))]
    for p, s in zip(params, shapes):
        data = rng.uniform(-1.0, 1.0, size=s)
        if name == "relu":
            # keep inputs clear of the kink so every coordinate is checked
            data = np.where(np.abs(data) < 0.05, 0.5, data)
        p.data = data
    proj = rng.uniform(-1.0, 1.0, size=op(*[p.data for p in params]).shape)

    def loss():
        return ops.sum(ops.mul(op(*params), proj))

    res = check_gradients(loss, params, epsilon=EPSILON)
    return SuiteResult("primitive", name, seed, res.max_rel_error, res.checked, res.skipped)


def primitive_suite(seeds: Iterable[int] = range(10), names: Optional[Sequence[str]] = None) -> List[SuiteResult]:
    return [primitive_case(n, s) for n in (names or sorted(PRIMITIVES)) for s in seeds]


def model_case(
    scheme,
    seed: int,
    nonlinearity: str = "relu",
    max_coords: Optional[int] = 24,
    batch: int = 2,
    image_size: int = 8,
    epsilon: float = EPSILON,
) -> SuiteResult:
    """Cross-entropy of a toy adapted model, checked over its whole parameter set.

    The model runs in float64 with a random head and random adapter weights
    on both projections, so no gradient is trivially zero. Smooth
    nonlinearities leave O(epsilon^2) truncation error that is not small
    against the tiniest coordinates, so gelu models want ``epsilon=1e-4``.
    """
    scheme = AttachScheme.parse(scheme)
    rng = np.random.default_rng(seed)
    cfg = AdapterConfig(gamma=2, kernel_size=3, nonlinearity=nonlinearity, init_scheme="kaiming_both")
    model = attach_adapters(build_backbone(toy_config(nonlinearity=nonlinearity), seed), scheme, cfg, seed)
    model.to_dtype(np.float64)
    head = model.head_parameters()
    head["head.weight"].data = rng.normal(scale=0.5, size=head["head.weight"].shape)
    head["head.bias"].data = rng.normal(scale=0.1, size=head["head.bias"].shape)
    for a in model.adapters:
        a.alpha.data = rng.uniform(0.5, 1.5, size=a.alpha.shape)
    select_trainable(model, TuningMode.full())
    for p in model.adapter_parameters().values():
        p.trainable = True
    x = rng.normal(size=(batch, 3, image_size, image_size))
    labels = rng.integers(0, model.num_classes, size=batch)

    def loss():
        return ops.softmax_cross_entropy(model(x), labels)

    params = list(model.named_parameters().values())
    res = check_gradients(loss, params, epsilon=epsilon, max_coords=max_coords, rng=np.random.default_rng(seed + 1))
    return SuiteResult(f"model/{nonlinearity}", scheme.value, seed, res.max_rel_error, res.checked, res.skipped)


def model_suite(
    seeds: Iterable[int] = range(10),
    schemes: Optional[Sequence] = None,
    nonlinearities: Sequence[str] = ("relu",),
    max_coords: Optional[int] = 24,
    epsilon: Optional[float] = None,
) -> List[SuiteResult]:
    """``epsilon=None`` picks the default step per nonlinearity."""
    schemes = list(schemes or AttachScheme)
    steps = {"relu": EPSILON, "gelu": SMOOTH_EPSILON}
    return [model_case(s, seed, nl, max_coords, epsilon=epsilon or steps[nl]) for nl in nonlinearities for s in schemes for seed in seeds]
