"""Command-line entry points.

Every command reads one INI-style run config (``--config``), validates it
completely before doing any work, and writes machine-readable results under
``--out``. Exit status is 0 when the command's own invariant checks pass,
1 when one of them fails and 2 for invalid input.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as _dt
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import suites
from .adapter import AdapterConfig
from .analysis import average_cka, gaussian_mmd, median_bandwidth, read_features, write_features, SimilarityReport
from .backbone import AttachScheme, BackboneConfig, StageSpec, attach_adapters, build_backbone, desk_config, resnet50_config, toy_config
from .core import checkpoint as ckpt
from .core.tensor import no_grad
from .data import Dataset, FewShotSpec, load_dataset, make_splits, make_synthetic_task, sample_few_shot, write_container
from .errors import ConvAdaptError
from .tuning import DEFAULT_LR_GRID, DEFAULT_WD_GRID, TrainConfig, TuningMode, count_trainable_params, evaluate, grid_search, train
from .tuning.counting import closed_form_count
from .tuning.modes import ModeKind

OUT_ENV = "CONVADAPT_OUT"
EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_INPUT = 0, 1, 2


class UsageError(ConvAdaptError):
    pass


# -- config ---------------------------------------------------------------------


def _floats(text: str) -> List[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _ints(text: str) -> List[int]:
    return [int(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _strs(text: str) -> List[str]:
    return [t.strip() for t in text.replace(";", ",").split(",") if t.strip()]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


SCHEMA: Dict[str, Dict[str, Callable[[str], object]]] = {
    "run": {"seed": int, "out": str},
    "backbone": {
        "preset": str,
        "stages": str,
        "kernel_size": _ints,
        "num_classes": int,
        "input_channels": int,
        "nonlinearity": str,
        "stem_kernel": int,
        "stem_stride": int,
    },
    "mode": {"kind": str, "scheme": str, "init_checkpoint": str},
    "adapter": {"gamma": int, "kernel_size": int, "nonlinearity": str, "init_scheme": str, "alpha_init": float},
    "train": {
        "lr": float,
        "weight_decay": float,
        "epochs": int,
        "warmup_epochs": int,
        "batch_size": int,
        "augment": str,
        "decay_alpha": _bool,
    },
    "data": {
        "path": str,
        "synthetic": str,
        "classes": int,
        "samples_per_class": int,
        "image_size": int,
        "shift": float,
        "data_seed": int,
        "val_fraction": float,
        "test_fraction": float,
        "shots": int,
    },
    "sweep": {"lrs": _floats, "weight_decays": _floats, "gammas": _ints},
    "gradcheck": {"seeds": int, "schemes": _strs, "nonlinearities": _strs, "max_coords": int},
}

PATH_KEYS = {("mode", "init_checkpoint"), ("data", "path")}


@dataclass
class RunConfig:
    values: Dict[str, Dict[str, object]] = field(default_factory=dict)
    base_dir: str = "."

    def get(self, section: str, key: str, default=None):
        return self.values.get(section, {}).get(key, default)

    def has(self, section: str) -> bool:
        return bool(self.values.get(section))


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    """Parse and type-check a run config; unknown sections and keys are rejected."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise UsageError(f"config is not valid INI: {err}") from None
    values: Dict[str, Dict[str, object]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise UsageError(f"unknown config section [{section}]; known sections: {', '.join(SCHEMA)}")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise UsageError(f"unknown key {key!r} in [{section}]; known keys: {', '.join(SCHEMA[section])}")
            try:
                value = SCHEMA[section][key](raw)
            except ValueError as err:
                raise UsageError(f"[{section}] {key} = {raw!r}: {err}") from None
            if (section, key) in PATH_KEYS and not os.path.isabs(value):
                value = os.path.normpath(os.path.join(base_dir, value))
            values[section][key] = value
    cfg = RunConfig(values, base_dir)
    _validate(cfg)
    return cfg


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return parse_config("")
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise UsageError(f"cannot read config {path}: {err.strerror}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)))


def _parse_stages(text: str) -> tuple:
    stages = []
    for chunk in text.split(";"):
        if chunk.strip():
            try:
                nums = _ints(chunk.replace(" ", ","))
            except ValueError:
                raise UsageError(f"[backbone] stages: cannot parse {chunk.strip()!r}") from None
            if len(nums) not in (4, 5):
                raise UsageError(f"stage {chunk.strip()!r} needs C_in,C_mid,C_out,blocks[,stride]")
            stages.append(StageSpec(*nums))
    return tuple(stages)


def backbone_config(cfg: RunConfig, num_classes: Optional[int] = None) -> BackboneConfig:
    b = cfg.values.get("backbone", {})
    preset = b.get("preset", "toy" if "stages" not in b else None)
    if preset and "stages" in b:
        raise UsageError("[backbone] takes either preset or stages, not both")
    classes = num_classes or b.get("num_classes")
    nl = b.get("nonlinearity", "relu")
    if preset:
        makers = {"toy": toy_config, "desk": desk_config, "resnet50": resnet50_config}
        if preset not in makers:
            raise UsageError(f"unknown backbone preset {preset!r}; expected one of {sorted(makers)}")
        for key in ("kernel_size", "input_channels", "stem_kernel", "stem_stride"):
            if key in b:
                raise UsageError(f"[backbone] {key} cannot be combined with a preset; spell out stages instead")
        if preset == "resnet50":
            if "nonlinearity" in b and nl != "relu":
                raise UsageError("the resnet50 preset is relu only")
            return resnet50_config(classes or 1000)
        base = makers[preset]()
        return BackboneConfig(base.stages, classes or base.num_classes, base.input_channels, base.kernel_size, nl, base.stem_kernel, base.stem_stride)
    ks = b.get("kernel_size", [3])
    return BackboneConfig(
        stages=_parse_stages(b["stages"]),
        num_classes=classes or 10,
        input_channels=b.get("input_channels", 3),
        kernel_size=ks[0] if len(ks) == 1 else tuple(ks),
        nonlinearity=nl,
        stem_kernel=b.get("stem_kernel", 3),
        stem_stride=b.get("stem_stride", 1),
    )


def adapter_config(cfg: RunConfig) -> AdapterConfig:
    return AdapterConfig(**cfg.values.get("adapter", {}))


def tuning_mode(cfg: RunConfig) -> TuningMode:
    m = cfg.values.get("mode", {})
    kind = m.get("kind", "adapter")
    if m.get("scheme") and TuningMode.parse(kind).kind is not ModeKind.ADAPTER:
        raise UsageError(f"[mode] scheme only applies to adapter mode, not {kind!r}")
    return TuningMode.parse(kind, m.get("scheme"), adapter_config(cfg))


def train_config(cfg: RunConfig, seed: int) -> TrainConfig:
    t = cfg.values.get("train", {})
    epochs = t.get("epochs", 10)
    return TrainConfig(
        lr=t.get("lr", 1e-3),
        weight_decay=t.get("weight_decay", 1e-4),
        total_epochs=epochs,
        warmup_epochs=t.get("warmup_epochs", min(1, epochs)),
        batch_size=t.get("batch_size", 32),
        seed=seed,
        augment=t.get("augment", "none"),
        decay_alpha=t.get("decay_alpha", False),
    )


def _validate(cfg: RunConfig) -> None:
    try:
        if cfg.has("backbone") or cfg.has("mode") or cfg.has("adapter"):
            backbone_config(cfg)
            tuning_mode(cfg)
        if cfg.has("train"):
            train_config(cfg, 0)
        d = cfg.values.get("data", {})
        if "path" in d and "synthetic" in d:
            raise UsageError("[data] takes either path or synthetic, not both")
        for key in ("val_fraction", "test_fraction"):
            if not 0.0 <= d.get(key, 0.0) < 1.0:
                raise UsageError(f"[data] {key} must lie in [0, 1)")
        if "shots" in d:
            FewShotSpec(d["shots"])
        g = cfg.values.get("gradcheck", {})
        for s in g.get("schemes", []):
            AttachScheme.parse(s)
        for nl in g.get("nonlinearities", []):
            if nl not in ("relu", "gelu"):
                raise UsageError(f"[gradcheck] unknown nonlinearity {nl!r}")
    except UsageError:
        raise
    except (ConvAdaptError, TypeError) as err:
        raise UsageError(str(err)) from None


# -- helpers -------------------------------------------------------------------------


def g6(v):
    return None if v is None else float(f"{v:.6g}")


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()


def write_summary(path: str, payload: dict) -> None:
    """JSON with the timestamp alone on the first key line; everything else is deterministic."""
    with open(path, "w") as fh:
        json.dump({"timestamp": _timestamp(), **payload}, fh, indent=2)
        fh.write("\n")


def write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_data(cfg: RunConfig, seed: int) -> Dataset:
    d = cfg.values.get("data", {})
    if "path" in d:
        ds = load_dataset(d["path"])
    else:
        ds = make_synthetic_task(
            d.get("synthetic", "texture"),
            d.get("classes", 4),
            d.get("samples_per_class", 32),
            d.get("image_size", 16),
            seed=d.get("data_seed", seed),
            shift=d.get("shift", 0.0),
        )
    split_seed = d.get("data_seed", seed)
    ds = make_splits(ds, seed=split_seed, val_fraction=d.get("val_fraction", 0.2), test_fraction=d.get("test_fraction", 0.0))
    if "shots" in d:
        ds = sample_few_shot(ds, FewShotSpec(d["shots"], seed=split_seed))
    return ds


def build_model(cfg: RunConfig, mode: TuningMode, num_classes: int, seed: int):
    base = build_backbone(backbone_config(cfg, num_classes), seed)
    init = cfg.get("mode", "init_checkpoint")
    if init:
        records = {n: r for n, r in ckpt.load(init).items() if not n.startswith("adapter.")}
        base.load_records(records)
        if base.num_classes != num_classes:
            base.replace_head(num_classes)
    if mode.kind is ModeKind.ADAPTER:
        return attach_adapters(base, mode.scheme, mode.adapter, seed, copy_backbone=False)
    return base


def _seed(args, cfg: RunConfig) -> int:
    return args.seed if args.seed is not None else cfg.get("run", "seed", 0)


def _out(args, cfg: RunConfig, default: str) -> str:
    out = args.out or os.environ.get(OUT_ENV) or cfg.get("run", "out") or default
    if not os.path.isabs(out) and not args.out and cfg.get("run", "out"):
        out = os.path.join(cfg.base_dir, out)
    os.makedirs(out, exist_ok=True)
    return out


def _say(msg: str) -> None:
    print(msg, flush=True)


# -- commands -----------------------------------------------------------------------------


def cmd_train(args, cfg: RunConfig) -> int:
    seed = _seed(args, cfg)
    ds = load_data(cfg, seed)
    mode = tuning_mode(cfg)
    model = build_model(cfg, mode, ds.class_count, seed)
    tc = train_config(cfg, seed)
    out = _out(args, cfg, "runs/train")
    before = {r.name: r for r in ckpt.decode(ckpt.encode(model.state_records())).values()}

    def progress(epoch, loss, acc):
        _say(f"epoch {epoch}: train_loss {loss:.6g}" + ("" if acc is None else f" val_acc {acc:.6g}"))

    metrics, records = train(model, mode, tc, ds, on_epoch=progress)
    after = {r.name: r for r in records}
    trainable = {n for n, p in model.named_parameters().items() if p.trainable}
    frozen = [n for n in before if n not in trainable]
    frozen_ok = ckpt.checksum({n: before[n] for n in frozen}) == ckpt.checksum({n: after[n] for n in frozen})
    noop_ok = tc.total_epochs > 0 or ckpt.checksum(before) == ckpt.checksum(after)
    ckpt.save(os.path.join(out, "model.petk"), records)
    metrics.write_csv(os.path.join(out, "metrics.csv"))
    checks = {"frozen_parameters_unchanged": frozen_ok, "zero_epoch_noop": noop_ok}
    write_summary(
        os.path.join(out, "summary.json"),
        {"mode": mode.label, "seed": seed, **metrics.summary(), "checks": checks},
    )
    _say(f"trainable_params {metrics.trainable_params}; test_acc {g6(metrics.test_acc)}")
    return EXIT_OK if all(checks.values()) else EXIT_CHECK_FAILED


def cmd_evaluate(args, cfg: RunConfig) -> int:
    seed = _seed(args, cfg)
    ds = load_data(cfg, seed)
    mode = tuning_mode(cfg)
    model = build_model(cfg, mode, ds.class_count, seed)
    records = ckpt.load(args.checkpoint)
    model.load_records(records)
    out = _out(args, cfg, "runs/evaluate")
    result = {"checkpoint_sha256": ckpt.checksum(records), "accuracy": {}}
    for split in ("train", "val", "test"):
        if len(ds.indices(split)):
            result["accuracy"][split] = g6(evaluate(model, ds, split))
    write_summary(os.path.join(out, "summary.json"), result)
    for split, acc in result["accuracy"].items():
        _say(f"{split}: {acc}")
    ok = all(0.0 <= a <= 1.0 for a in result["accuracy"].values())
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_sweep(args, cfg: RunConfig) -> int:
    seed = _seed(args, cfg)
    ds = load_data(cfg, seed)
    mode = tuning_mode(cfg)
    s = cfg.values.get("sweep", {})
    lrs = s.get("lrs", list(DEFAULT_LR_GRID))
    wds = s.get("weight_decays", list(DEFAULT_WD_GRID))
    gammas = s.get("gammas")
    build_model(cfg, mode, ds.class_count, seed)  # fail on bad adapter shapes before writing anything
    out = _out(args, cfg, "runs/sweep")
    res = grid_search(
        lambda m: build_model(cfg, m, ds.class_count, seed),
        mode,
        ds,
        train_config(cfg, seed),
        lrs=lrs,
        weight_decays=wds,
        gammas=gammas,
        workers=args.threads,
    )
    res.write_csv(os.path.join(out, "trials.csv"))
    b = res.best
    best = {
        "lr": g6(b.lr),
        "weight_decay": g6(b.weight_decay),
        "gamma": b.gamma,
        "val_acc": g6(b.val_acc),
        "trainable_params": b.trainable_params,
        "diverged": b.diverged,
    }
    write_json(os.path.join(out, "best.json"), best)
    write_summary(os.path.join(out, "summary.json"), {"mode": mode.label, "seed": seed, "trials": len(res.trials), "best": best})
    _say(f"best: lr {best['lr']} weight_decay {best['weight_decay']} gamma {best['gamma'] or '-'} val_acc {best['val_acc']}")
    ok = len(res.trials) == len(lrs) * len(wds) * (len(gammas) if gammas and mode.kind is ModeKind.ADAPTER else 1)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _count_modes(cfg: RunConfig) -> List[TuningMode]:
    acfg = adapter_config(cfg)
    return [TuningMode.full(), TuningMode.linear_probe(), TuningMode.bias()] + [TuningMode.with_adapter(s, acfg) for s in AttachScheme]


def cmd_count_params(args, cfg: RunConfig) -> int:
    out = _out(args, cfg, "runs/count")
    bcfg = backbone_config(cfg)
    include_head = not args.exclude_head
    base = build_backbone(bcfg, _seed(args, cfg))
    head_size = sum(p.size for p in base.head_parameters().values())
    full = closed_form_count(bcfg, TuningMode.full(), include_head=include_head)
    rows, ok = [], True
    for mode in _count_modes(cfg):
        model = attach_adapters(base, mode.scheme, mode.adapter, copy_backbone=False) if mode.kind is ModeKind.ADAPTER else base
        enumerated = count_trainable_params(model, mode) - (0 if include_head else head_size)
        closed = closed_form_count(bcfg, mode, include_head=include_head)
        ok &= enumerated == closed
        rows.append({"mode": mode.label, "trainable_params": closed, "enumerated": enumerated, "fraction_of_full": g6(closed / full)})
    with open(os.path.join(out, "counts.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({**r, "fraction_of_full": f"{r['fraction_of_full']:.6g}"})
    write_summary(os.path.join(out, "summary.json"), {"include_head": include_head, "counts": rows, "closed_form_matches": ok})
    width = max(len(r["mode"]) for r in rows)
    _say(f"{'mode':<{width}}  {'params':>12}  {'of full':>10}")
    for r in rows:
        _say(f"{r['mode']:<{width}}  {r['trainable_params']:>12}  {r['fraction_of_full']:>10.6g}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_analyze(args, cfg: RunConfig) -> int:
    out = _out(args, cfg, "runs/analyze")
    if args.what == "cka":
        report = average_cka(args.inputs[0], args.inputs[1], include_adapters=args.include_adapters)
        values = [v for v in report.per_layer.values() if v is not None]
        ok = all(-1e-12 <= v <= 1 + 1e-9 for v in values)
    elif args.what == "mmd":
        p, q = read_features(args.inputs[0]), read_features(args.inputs[1])
        bw = args.bandwidth
        sigma = median_bandwidth(np.vstack([p, q]).astype(np.float64)) if bw == "median" else float(bw)
        report = SimilarityReport(mmd=gaussian_mmd(p, q, bandwidth=sigma, unbiased=args.unbiased), bandwidth=sigma)
        ok = args.unbiased or report.mmd >= -1e-9
    else:
        seed = _seed(args, cfg)
        ds = load_data(cfg, seed)
        mode = tuning_mode(cfg)
        model = build_model(cfg, mode, ds.class_count, seed)
        model.load_records(ckpt.load(args.inputs[0]))
        with no_grad():
            feats = np.concatenate([model.features(ds.images[i : i + 256]).data for i in range(0, len(ds), 256)])
        path = os.path.join(out, "features.bin")
        write_features(path, feats)
        _say(f"wrote {feats.shape[0]}x{feats.shape[1]} penultimate features to {path}")
        return EXIT_OK
    report.write(out)
    _say(json.dumps(report.to_dict()))
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    out = _out(args, cfg, "runs/gradcheck")
    g = cfg.values.get("gradcheck", {})
    seed0 = _seed(args, cfg)
    seeds = range(seed0, seed0 + g.get("seeds", 10))
    results = suites.primitive_suite(seeds)
    results += suites.model_suite(
        seeds,
        schemes=g.get("schemes") or list(AttachScheme),
        nonlinearities=g.get("nonlinearities", ["relu"]),
        max_coords=g.get("max_coords", 24),
    )
    ok = all(r.passed for r in results)
    payload = {
        "epsilon": {"primitive": suites.EPSILON, "relu": suites.EPSILON, "gelu": suites.SMOOTH_EPSILON},
        "tolerance": suites.TOLERANCE,
        "passed": ok,
        "worst": g6(max(r.max_rel_error for r in results)),
        "cases": [r.to_dict() for r in results],
    }
    write_summary(os.path.join(out, "report.json"), payload)
    failed = [r for r in results if not r.passed]
    _say(f"{len(results) - len(failed)}/{len(results)} gradient checks passed; worst relative error {payload['worst']}")
    for r in failed:
        _say(f"FAIL {r.suite} {r.case} seed {r.seed}: {r.max_rel_error:.6g}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_gen_data(args, cfg: RunConfig) -> int:
    d = cfg.values.get("data", {})
    kind = args.kind or d.get("synthetic", "texture")
    classes = args.classes or d.get("classes", 4)
    per_class = args.samples_per_class or d.get("samples_per_class", 32)
    size = args.image_size or d.get("image_size", 16)
    shift = args.shift if args.shift is not None else d.get("shift", 0.0)
    ds = make_synthetic_task(kind, classes, per_class, size, seed=_seed(args, cfg), shift=shift)
    path = args.file or os.path.join(_out(args, cfg, "data"), f"{kind}.petd")
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    write_container(path, ds)
    ok = np.array_equal(load_dataset(path).pixels, ds.pixels)
    _say(f"wrote {len(ds)} {kind} samples ({classes} classes, {size}x{size}) to {path}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# -- entry point -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config file (INI sections)")
    common.add_argument("--out", help=f"output directory (also ${OUT_ENV})")
    common.add_argument("--seed", type=int, help="overrides [run] seed")
    common.add_argument("--threads", type=int, default=1, help="concurrent sweep trials")

    parser = argparse.ArgumentParser(prog="convadapt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train one model").set_defaults(func=cmd_train)
    p = sub.add_parser("evaluate", parents=[common], help="top-1 accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)
    sub.add_parser("sweep", parents=[common], help="grid search over lr, weight decay and gamma").set_defaults(func=cmd_sweep)
    p = sub.add_parser("count-params", parents=[common], help="trainable counts per tuning mode")
    p.add_argument("--exclude-head", action="store_true", help="leave the linear head out of counts and fractions")
    p.set_defaults(func=cmd_count_params)
    p = sub.add_parser("analyze", parents=[common], help="weight CKA, feature MMD, or feature extraction")
    p.add_argument("what", choices=["cka", "mmd", "features"])
    p.add_argument("inputs", nargs="+", help="two checkpoints (cka), two feature dumps (mmd), or one checkpoint (features)")
    p.add_argument("--bandwidth", default="median", help="Gaussian kernel sigma or 'median'")
    p.add_argument("--unbiased", action="store_true", help="unbiased MMD (may be negative)")
    p.add_argument("--include-adapters", action="store_true")
    p.set_defaults(func=cmd_analyze)
    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suites").set_defaults(func=cmd_gradcheck)
    p = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset container")
    p.add_argument("--kind", choices=["texture", "counting", "orientation"])
    p.add_argument("--classes", type=int)
    p.add_argument("--samples-per-class", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--shift", type=float)
    p.add_argument("--file", help="container path (default OUT/<kind>.petd)")
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "analyze":
            need = {"cka": 2, "mmd": 2, "features": 1}[args.what]
            if len(args.inputs) != need:
                raise UsageError(f"analyze {args.what} takes {need} input file(s), got {len(args.inputs)}")
        if args.threads < 1:
            raise UsageError("--threads must be positive")
        return args.func(args, cfg)
    except ConvAdaptError as err:
        print(f"convadapt {args.command}: error: {err}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as err:
        print(f"convadapt {args.command}: error: {err}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
