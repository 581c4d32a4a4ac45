"""Training, evaluation and grid search."""

from __future__ import annotations

import csv
import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from ..backbone import AdaptedModel, Backbone
from ..core import ops
from ..core.tensor import backward, no_grad
from ..data.augment import augment
from ..data.dataset import Dataset
from ..errors import ConfigurationError, DivergenceError
from .modes import ModeKind, TuningMode, count_trainable_params, select_trainable
from .optim import AdamWState, adamw_step, cosine_warmup_lr

Model = Union[Backbone, AdaptedModel]

DEFAULT_LR_GRID = (1e-3, 5e-4, 1e-4, 5e-5, 1e-5)
DEFAULT_WD_GRID = (1e-2, 1e-3, 1e-4, 0.0)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    total_epochs: int = 100
    warmup_epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    augment: str = "none"
    decay_alpha: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.total_epochs < 0 or self.warmup_epochs < 0 or self.warmup_epochs > self.total_epochs:
            raise ConfigurationError("need 0 <= warmup_epochs <= total_epochs")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive")

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})


@dataclass
class Metrics:
    train_loss: List[float] = field(default_factory=list)
    val_acc: List[Optional[float]] = field(default_factory=list)
    test_acc: Optional[float] = None
    trainable_params: int = 0
    wall_clock_seconds: float = 0.0

    def summary(self) -> dict:
        def g(v):
            return None if v is None else float(f"{v:.6g}")

        return {
            "epochs": len(self.train_loss),
            "final_train_loss": g(self.train_loss[-1]) if self.train_loss else None,
            "final_val_acc": g(self.val_acc[-1]) if self.val_acc else None,
            "test_acc": g(self.test_acc),
            "trainable_params": self.trainable_params,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_acc"])
            for i, (loss, acc) in enumerate(zip(self.train_loss, self.val_acc)):
                w.writerow([i + 1, f"{loss:.6g}", "" if acc is None else f"{acc:.6g}"])


def predict(model: Model, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    out = []
    with no_grad():
        for i in range(0, len(images), batch_size):
            out.append(np.argmax(model(images[i : i + batch_size]).data, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def evaluate(model: Model, dataset: Dataset, split: Optional[str] = None, batch_size: int = 256) -> float:
    """Top-1 accuracy on ``dataset`` (or one of its splits)."""
    ds = dataset if split is None else dataset.subset(split)
    if len(ds) == 0:
        raise ConfigurationError(f"cannot evaluate on an empty {'dataset' if split is None else split + ' split'}")
    return float(np.mean(predict(model, ds.images, batch_size) == ds.labels))


def train(
    model: Model,
    mode: TuningMode,
    config: TrainConfig,
    dataset: Dataset,
    on_epoch: Optional[Callable[[int, float, Optional[float]], None]] = None,
):
    """Train the trainable set of ``mode`` on the ``train`` split.

    Returns ``(metrics, checkpoint_records)``. Validation accuracy is recorded
    per epoch when a ``val`` split exists, test accuracy once at the end.
    """
    start = time.perf_counter()
    select_trainable(model, mode)
    params = [p for p in model.named_parameters().values() if p.trainable]
    metrics = Metrics(trainable_params=sum(p.size for p in params))
    train_idx = dataset.indices("train")
    if len(train_idx) == 0:
        raise ConfigurationError("training split is empty")
    has_val = len(dataset.indices("val")) > 0
    steps_per_epoch = -(-len(train_idx) // config.batch_size)
    total_steps = steps_per_epoch * config.total_epochs
    warmup_steps = steps_per_epoch * config.warmup_epochs
    rng = np.random.default_rng(config.seed)
    state = AdamWState()
    step = 0
    for epoch in range(config.total_epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        losses = []
        for b in range(steps_per_epoch):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            x = augment(dataset.images[idx], config.augment, rng)
            for p in params:
                p.grad = None
            loss = ops.softmax_cross_entropy(model(x), dataset.labels[idx])
            value = float(loss.data)
            if not np.isfinite(value):
                metrics.wall_clock_seconds = time.perf_counter() - start
                raise DivergenceError(f"loss became {value} at epoch {epoch + 1}, step {step}", partial=metrics)
            backward(loss)
            lr_t = cosine_warmup_lr(step, total_steps, warmup_steps, config.lr)
            try:
                adamw_step(params, state, lr_t, config.weight_decay, config.betas, config.eps, config.decay_alpha)
            except DivergenceError as err:
                metrics.wall_clock_seconds = time.perf_counter() - start
                raise DivergenceError(str(err), partial=metrics) from None
            losses.append(value * len(idx))
            step += 1
        metrics.train_loss.append(float(np.sum(losses) / len(train_idx)))
        metrics.val_acc.append(evaluate(model, dataset, "val") if has_val else None)
        if on_epoch:
            on_epoch(epoch + 1, metrics.train_loss[-1], metrics.val_acc[-1])
    for p in params:
        p.grad = None
    if len(dataset.indices("test")):
        metrics.test_acc = evaluate(model, dataset, "test")
    metrics.wall_clock_seconds = time.perf_counter() - start
    return metrics, model.state_records()


@dataclass
class Trial:
    lr: float
    weight_decay: float
    gamma: Optional[int]
    val_acc: float
    trainable_params: int
    metrics: Metrics = field(repr=False, default=None)
    diverged: bool = False

    def row(self) -> dict:
        return {
            "lr": f"{self.lr:.6g}",
            "weight_decay": f"{self.weight_decay:.6g}",
            "gamma": "" if self.gamma is None else self.gamma,
            "val_acc": f"{self.val_acc:.6g}",
            "trainable_params": self.trainable_params,
            "diverged": int(self.diverged),
        }


@dataclass
class GridResult:
    best: Trial
    trials: List[Trial]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.trials[0].row()))
            w.writeheader()
            for t in self.trials:
                w.writerow(t.row())


def _mode_with_gamma(mode: TuningMode, gamma: Optional[int]) -> TuningMode:
    if gamma is None or mode.kind is not ModeKind.ADAPTER:
        return mode
    return TuningMode.with_adapter(mode.scheme, mode.adapter.replace(gamma=gamma))


def grid_search(
    model_factory: Callable[[TuningMode], Model],
    mode: TuningMode,
    dataset: Dataset,
    base_config: TrainConfig,
    lrs: Sequence[float] = DEFAULT_LR_GRID,
    weight_decays: Sequence[float] = DEFAULT_WD_GRID,
    gammas: Optional[Sequence[int]] = None,
    workers: int = 1,
) -> GridResult:
    """Pick the (lr, wd, γ) with the best final validation accuracy.

    Ties go to the smaller trainable count, then the smaller lr. A diverged
    trial scores validation accuracy 0. ``model_factory`` must return a fresh
    model for each trial.
    """
    if mode.kind is not ModeKind.ADAPTER:
        gammas = None
    grid = list(itertools.product(lrs, weight_decays, gammas or [None]))
    if not grid:
        raise ConfigurationError("grid search needs at least one configuration")
    if len(dataset.indices("val")) == 0:
        raise ConfigurationError("grid search needs a validation split")

    def run(point) -> Trial:
        lr, wd, gamma = point
        trial_mode = _mode_with_gamma(mode, gamma)
        model = model_factory(trial_mode)
        cfg = base_config.replace(lr=lr, weight_decay=wd)
        try:
            metrics, _ = train(model, trial_mode, cfg, dataset)
            val = metrics.val_acc[-1] if metrics.val_acc else evaluate(model, dataset, "val")
            return Trial(lr, wd, gamma, float(val), metrics.trainable_params, metrics)
        except DivergenceError as err:
            partial = err.partial or Metrics()
            return Trial(lr, wd, gamma, 0.0, count_trainable_params(model), partial, diverged=True)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(run, grid))
    else:
        trials = [run(p) for p in grid]
    best = min(trials, key=lambda t: (-t.val_acc, t.trainable_params, t.lr))
    return GridResult(best, trials)
