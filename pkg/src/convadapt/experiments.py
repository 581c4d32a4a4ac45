"""Desk-scale transfer experiments on the synthetic tasks.

Every comparison follows one protocol: a backbone is pre-trained with full
fine-tuning on a source family, each tuning mode picks its learning rate from
``Recipe.lr_grid`` on a validation split (seed 0), and the chosen rate is then
rerun over several seeds and scored on a held-out test split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

from .adapter import AdapterConfig
from .analysis import average_cka
from .backbone import Backbone, BackboneConfig, attach_adapters, build_backbone, toy_config
from .data.dataset import Dataset, concat, make_splits
from .data.fewshot import FewShotSpec, sample_few_shot
from .data.synthetic import make_synthetic_task
from .tuning.loop import TrainConfig, grid_search, train
from .tuning.modes import ModeKind, TuningMode

Model = object  # Backbone | AdaptedModel


@dataclass(frozen=True)
class Recipe:
    epochs: int = 20
    warmup_epochs: int = 2
    batch_size: int = 64
    weight_decay: float = 1e-4
    lr_grid: tuple = (3e-2, 1e-2, 3e-3, 1e-3)

    def train_config(self, lr: float, seed: int) -> TrainConfig:
        return TrainConfig(
            lr=lr,
            weight_decay=self.weight_decay,
            total_epochs=self.epochs,
            warmup_epochs=self.warmup_epochs,
            batch_size=self.batch_size,
            seed=seed,
        )


# -- tasks and models --------------------------------------------------------


def pretrain(
    kind: str,
    classes: int,
    samples_per_class: int,
    shifts: Sequence[float] = (0.0,),
    config: Optional[BackboneConfig] = None,
    epochs: int = 15,
    lr: float = 2e-3,
    seed: int = 0,
    data_seed: int = 100,
    image_size: int = 16,
) -> Backbone:
    """Full fine-tuning from scratch on the union of the source families ``shifts``."""
    parts = [
        make_synthetic_task(kind, classes, samples_per_class, image_size, seed=data_seed + i, shift=s)
        for i, s in enumerate(shifts)
    ]
    source = make_splits(concat(parts), seed=seed, val_fraction=0.0)
    model = build_backbone(config or toy_config(classes), seed=seed)
    cfg = TrainConfig(lr=lr, weight_decay=1e-4, total_epochs=epochs, warmup_epochs=1, batch_size=64, seed=seed)
    train(model, TuningMode.full(), cfg, source)
    return model


def target_task(
    kind: str,
    classes: int,
    train_per_class: int,
    val_per_class: int,
    test_per_class: int,
    shift: float,
    seed: int = 200,
    image_size: int = 16,
) -> Dataset:
    """A shifted task with exact per-class train/val/test sizes."""
    total = train_per_class + val_per_class + test_per_class
    ds = make_synthetic_task(kind, classes, total, image_size, seed=seed, shift=shift)
    split = np.empty(len(ds), dtype="<U5")
    for c in range(classes):
        idx = np.flatnonzero(ds.labels == c)
        split[idx[:train_per_class]] = "train"
        split[idx[train_per_class : train_per_class + val_per_class]] = "val"
        split[idx[train_per_class + val_per_class :]] = "test"
    return Dataset(ds.pixels, ds.labels, classes, split)


def build_model(pretrained: Backbone, mode: TuningMode, num_classes: int, seed: int = 0):
    """Fresh copy of ``pretrained`` with a new zero head, adapted when ``mode`` asks for it."""
    base = pretrained.clone()
    base.replace_head(num_classes)
    if mode.kind is ModeKind.ADAPTER:
        return attach_adapters(base, mode.scheme, mode.adapter, seed=seed, copy_backbone=False)
    return base


def run(pretrained: Backbone, mode: TuningMode, dataset: Dataset, recipe: Recipe, lr: float, seed: int):
    """Train one fresh model; returns ``(metrics, trained_model)``."""
    model = build_model(pretrained, mode, dataset.class_count, seed)
    metrics, _ = train(model, mode, recipe.train_config(lr, seed), dataset)
    return metrics, model


def select_lr(pretrained: Backbone, mode: TuningMode, dataset: Dataset, recipe: Recipe, seed: int = 0) -> float:
    """Best learning rate from the recipe grid by final validation accuracy."""
    result = grid_search(
        lambda m: build_model(pretrained, m, dataset.class_count, seed),
        mode,
        dataset,
        recipe.train_config(recipe.lr_grid[0], seed),
        lrs=recipe.lr_grid,
        weight_decays=(recipe.weight_decay,),
    )
    return result.best.lr


@dataclass
class ModeResult:
    label: str
    lr: float
    accs: List[float] = field(default_factory=list)
    trainable_params: int = 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.accs))

    def to_dict(self) -> dict:
        return {
            "lr": float(f"{self.lr:.6g}"),
            "mean_acc": float(f"{self.mean:.6g}"),
            "per_seed": [float(f"{a:.6g}") for a in self.accs],
            "trainable_params": self.trainable_params,
        }


def compare_modes(
    pretrained: Backbone,
    modes: Mapping[str, TuningMode],
    datasets: Callable[[int], Dataset],
    seeds: Sequence[int],
    recipe: Recipe,
    lrs: Optional[Mapping[str, float]] = None,
) -> Dict[str, ModeResult]:
    """Test accuracy per mode and seed; ``datasets(seed)`` supplies each seed's task."""
    lrs = dict(lrs or {})
    out = {}
    for name, mode in modes.items():
        if name not in lrs:
            lrs[name] = select_lr(pretrained, mode, datasets(seeds[0]), recipe, seed=seeds[0])
        res = ModeResult(name, lrs[name])
        for seed in seeds:
            metrics, _ = run(pretrained, mode, datasets(seed), recipe, lrs[name], seed)
            res.accs.append(float(metrics.test_acc))
            res.trainable_params = metrics.trainable_params
        out[name] = res
    return out


def _fmt(results: Mapping[str, ModeResult]) -> dict:
    return {k: v.to_dict() for k, v in results.items()}


# -- texture transfer ordering ---------------------------------------------


@dataclass
class TransferSettings:
    classes: int = 20
    pretrain_per_class: int = 100
    pretrain_epochs: int = 15
    train_per_class: int = 50
    val_per_class: int = 10
    test_per_class: int = 20
    shift: float = 1.0
    gamma: int = 1
    kernel_size: int = 3
    seeds: tuple = (0, 1, 2)
    recipe: Recipe = field(default_factory=Recipe)


def texture_pretrained(settings: TransferSettings, config: Optional[BackboneConfig] = None) -> Backbone:
    return pretrain(
        "texture",
        settings.classes,
        settings.pretrain_per_class,
        shifts=(0.0,),
        config=config or toy_config(settings.classes),
        epochs=settings.pretrain_epochs,
    )


def texture_target(settings: TransferSettings, shift: Optional[float] = None) -> Dataset:
    return target_task(
        "texture",
        settings.classes,
        settings.train_per_class,
        settings.val_per_class,
        settings.test_per_class,
        settings.shift if shift is None else shift,
    )


@dataclass
class TransferReport:
    results: Dict[str, ModeResult]
    margin: float = 0.05

    @property
    def lp_below_adapter(self) -> bool:
        return self.results["linear_probe"].mean < self.results["adapter"].mean

    @property
    def adapter_near_full(self) -> bool:
        return self.results["adapter"].mean >= self.results["full"].mean - self.margin

    @property
    def passed(self) -> bool:
        return self.lp_below_adapter and self.adapter_near_full

    def to_dict(self) -> dict:
        return {"modes": _fmt(self.results), "lp_below_adapter": self.lp_below_adapter, "adapter_near_full": self.adapter_near_full}


def transfer_ordering(settings: TransferSettings = TransferSettings(), pretrained: Optional[Backbone] = None) -> TransferReport:
    """LinearProbe vs ConvParallel adapter vs FullFT on a shifted texture family."""
    pretrained = pretrained or texture_pretrained(settings)
    task = texture_target(settings)
    adapter = AdapterConfig(gamma=settings.gamma, kernel_size=settings.kernel_size)
    modes = {
        "linear_probe": TuningMode.linear_probe(),
        "adapter": TuningMode.with_adapter("conv_parallel", adapter),
        "full": TuningMode.full(),
    }
    results = compare_modes(pretrained, modes, lambda seed: task, settings.seeds, settings.recipe)
    return TransferReport(results)


# -- few-shot counting -----------------------------------------------------


@dataclass
class FewShotSettings:
    classes: int = 6
    pretrain_per_class: int = 150
    pretrain_shifts: tuple = (0.0, 0.25, 0.5)
    pretrain_epochs: int = 15
    shift: float = 0.5
    pool_per_class: int = 20
    val_per_class: int = 20
    test_per_class: int = 100
    shots: tuple = (1, 2)
    gamma: int = 1
    seeds: tuple = (0, 1, 2, 3, 4)
    recipe: Recipe = field(default_factory=lambda: Recipe(epochs=100, warmup_epochs=10, batch_size=32))


@dataclass
class FewShotReport:
    results: Dict[int, Dict[str, ModeResult]]

    def passed_at(self, shots: int) -> bool:
        r = self.results[shots]
        return r["adapter"].mean >= r["full"].mean

    @property
    def passed(self) -> bool:
        return all(self.passed_at(s) for s in self.results)

    def to_dict(self) -> dict:
        return {str(s): {"modes": _fmt(r), "adapter_ge_full": self.passed_at(s)} for s, r in self.results.items()}


def few_shot_ordering(settings: FewShotSettings = FewShotSettings(), pretrained: Optional[Backbone] = None) -> FewShotReport:
    """ConvParallel adapter vs FullFT at 1 and 2 shots on a shifted counting task."""
    pretrained = pretrained or pretrain(
        "counting",
        settings.classes,
        settings.pretrain_per_class,
        shifts=settings.pretrain_shifts,
        epochs=settings.pretrain_epochs,
    )
    pool = target_task(
        "counting", settings.classes, settings.pool_per_class, settings.val_per_class, settings.test_per_class, settings.shift
    )
    modes = {
        "adapter": TuningMode.with_adapter("conv_parallel", AdapterConfig(gamma=settings.gamma)),
        "full": TuningMode.full(),
    }
    results = {}
    for shots in settings.shots:
        results[shots] = compare_modes(
            pretrained, modes, lambda seed: sample_few_shot(pool, FewShotSpec(shots, seed)), settings.seeds, settings.recipe
        )
    return FewShotReport(results)


# -- weight similarity against the adapter/FT gap ---------------------------


@dataclass
class TaskPoint:
    shift: float
    cka: float
    adapter_acc: float
    full_acc: float

    @property
    def gap(self) -> float:
        return self.adapter_acc - self.full_acc


@dataclass
class TrendReport:
    points: List[TaskPoint]

    @property
    def spearman(self) -> float:
        rho = spearmanr([p.cka for p in self.points], [p.gap for p in self.points]).statistic
        return float(rho)

    @property
    def passed(self) -> bool:
        return len(self.points) >= 4 and self.spearman > 0

    def to_dict(self) -> dict:
        g = lambda v: float(f"{v:.6g}")  # noqa: E731
        return {
            "tasks": [{"shift": p.shift, "mean_cka": g(p.cka), "adapter_acc": g(p.adapter_acc), "full_acc": g(p.full_acc), "gap": g(p.gap)} for p in self.points],
            "spearman": g(self.spearman),
        }


def cka_gap_trend(
    settings: TransferSettings = TransferSettings(),
    shifts: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
    pretrained: Optional[Backbone] = None,
    lrs: Optional[Mapping[str, float]] = None,
    seeds: Sequence[int] = (0,),
) -> TrendReport:
    """Per shifted texture task: mean weight-CKA(pre, FullFT-post) and adapter-minus-FT accuracy."""
    pretrained = pretrained or texture_pretrained(settings)
    adapter = TuningMode.with_adapter("conv_parallel", AdapterConfig(gamma=settings.gamma, kernel_size=settings.kernel_size))
    full = TuningMode.full()
    lrs = dict(lrs or {})
    points = []
    for shift in shifts:
        task = texture_target(settings, shift)
        for name, mode in (("adapter", adapter), ("full", full)):
            if name not in lrs:
                lrs[name] = select_lr(pretrained, mode, task, settings.recipe)
        ca, ft = [], []
        sims = []
        for seed in seeds:
            m_ca, _ = run(pretrained, adapter, task, settings.recipe, lrs["adapter"], seed)
            m_ft, ft_model = run(pretrained, full, task, settings.recipe, lrs["full"], seed)
            ca.append(m_ca.test_acc)
            ft.append(m_ft.test_acc)
            sims.append(average_cka(pretrained, ft_model).mean_cka)
        points.append(TaskPoint(shift, float(np.mean(sims)), float(np.mean(ca)), float(np.mean(ft))))
    return TrendReport(points)


# -- compression factor / kernel size ablation ---------------------------------


@dataclass
class AblationReport:
    gamma: Dict[int, ModeResult]
    kernel: Dict[int, ModeResult]

    @property
    def kernel_wins(self) -> int:
        """Seeds where the K=1 adapter scores strictly below K=3."""
        return int(sum(a < b for a, b in zip(self.kernel[1].accs, self.kernel[3].accs)))

    @property
    def gamma_spread(self) -> float:
        small = [self.gamma[g].mean for g in self.gamma if g <= 4]
        return float(max(small) - min(small)) if small else float("nan")

    @property
    def gamma_degrades(self) -> Optional[bool]:
        big = [g for g in self.gamma if g > 4]
        if not big:
            return None
        small = [self.gamma[g].mean for g in self.gamma if g <= 4]
        return all(self.gamma[g].mean < min(small) for g in big)

    def passed(self, min_wins: int = 4) -> bool:
        return self.kernel_wins >= min_wins

    def to_dict(self) -> dict:
        return {
            "gamma": {str(g): r.to_dict() for g, r in self.gamma.items()},
            "kernel": {str(k): r.to_dict() for k, r in self.kernel.items()},
            "gamma_spread_small": float(f"{self.gamma_spread:.6g}"),
            "gamma_large_degrades": self.gamma_degrades,
            "kernel_1_below_3_seeds": self.kernel_wins,
        }


def ablation(
    settings: TransferSettings = TransferSettings(),
    gammas: Sequence[int] = (1, 2, 4, 16),
    kernels: Sequence[int] = (1, 3),
    gamma_seeds: Sequence[int] = (0,),
    kernel_seeds: Sequence[int] = (0, 1, 2, 3, 4),
    scheme: str = "conv_parallel",
    pretrained: Optional[Backbone] = None,
    lr: Optional[float] = None,
) -> AblationReport:
    """Sweep the adapter's γ (at K=3) and K (at ``settings.gamma``) on the texture task.

    All variants share one learning rate, selected for the default adapter.
    """
    pretrained = pretrained or texture_pretrained(settings)
    task = texture_target(settings)
    recipe = settings.recipe

    def mode(gamma, k):
        return TuningMode.with_adapter(scheme, AdapterConfig(gamma=gamma, kernel_size=k))

    if lr is None:
        lr = select_lr(pretrained, mode(settings.gamma, settings.kernel_size), task, recipe)
    g_modes = {g: mode(g, 3) for g in gammas}
    k_modes = {k: mode(settings.gamma, k) for k in kernels}
    g_res = compare_modes(pretrained, g_modes, lambda s: task, gamma_seeds, recipe, {g: lr for g in gammas})
    k_res = compare_modes(pretrained, k_modes, lambda s: task, kernel_seeds, recipe, {k: lr for k in kernels})
    return AblationReport(g_res, k_res)
