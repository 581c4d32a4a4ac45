import csv
import json

import numpy as np
import pytest

from convadapt import cli
from convadapt.backbone import toy_config
from convadapt.core import checkpoint as ckpt
from convadapt.tuning import TuningMode, closed_form_count
from convadapt.backbone import AttachScheme
from convadapt.adapter import AdapterConfig

TRAIN_INI = """
[run]
seed = 1
[backbone]
preset = toy
[mode]
kind = adapter
scheme = conv_parallel
[train]
lr = 1e-2
epochs = {epochs}
batch_size = 16
[data]
synthetic = texture
classes = 3
samples_per_class = 8
image_size = 8
test_fraction = 0.25
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def without_timestamp(path):
    lines = open(path).read().splitlines()
    assert lines[1].lstrip().startswith('"timestamp"')
    return [lines[0]] + lines[2:]


def test_count_params_matches_library(tmp_path):
    assert cli.main(["count-params", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "counts.csv") as fh:
        rows = {r["mode"]: r for r in csv.DictReader(fh)}
    cfg = toy_config()
    modes = [TuningMode.full(), TuningMode.linear_probe(), TuningMode.bias()]
    modes += [TuningMode.with_adapter(s, AdapterConfig()) for s in AttachScheme]
    for m in modes:
        assert int(rows[m.label]["trainable_params"]) == closed_form_count(cfg, m)
        assert rows[m.label]["trainable_params"] == rows[m.label]["enumerated"]


def test_count_params_exclude_head(tmp_path):
    assert cli.main(["count-params", "--exclude-head", "--out", str(tmp_path)]) == 0
    summary = json.load(open(tmp_path / "summary.json"))
    lp = next(r for r in summary["counts"] if r["mode"] == "linear_probe")
    assert lp["trainable_params"] == 0 and summary["include_head"] is False


def test_zero_epochs_is_a_noop(tmp_path):
    cfg = write(tmp_path, TRAIN_INI.format(epochs=0))
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    summary = json.load(open(tmp_path / "a" / "summary.json"))
    assert summary["epochs"] == 0 and summary["checks"]["zero_epoch_noop"]
    # the saved weights are the freshly built ones
    pre = cli.build_model(cli.load_config(cfg), cli.tuning_mode(cli.load_config(cfg)), 3, 1)
    saved = ckpt.load(tmp_path / "a" / "model.petk")
    assert ckpt.checksum(saved) == ckpt.checksum({r.name: r for r in pre.state_records()})


def test_train_rerun_is_byte_identical_except_timestamp(tmp_path):
    cfg = write(tmp_path, TRAIN_INI.format(epochs=2))
    for out in ("a", "b"):
        assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / out)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    assert (a / "model.petk").read_bytes() == (b / "model.petk").read_bytes()
    assert without_timestamp(a / "summary.json") == without_timestamp(b / "summary.json")
    assert json.load(open(a / "summary.json"))["checks"]["frozen_parameters_unchanged"]


def test_seed_flag_overrides_config(tmp_path):
    cfg = write(tmp_path, TRAIN_INI.format(epochs=1))
    cli.main(["train", "--config", cfg, "--out", str(tmp_path / "a")])
    cli.main(["train", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "model.petk").read_bytes() != (tmp_path / "b" / "model.petk").read_bytes()


def test_out_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["count-params"]) == 0
    assert (tmp_path / "env" / "counts.csv").exists()


def test_singleton_sweep_returns_that_configuration(tmp_path):
    text = TRAIN_INI.format(epochs=1) + "[sweep]\nlrs = 3e-3\nweight_decays = 0.01\ngammas = 2\n"
    cfg = write(tmp_path, text)
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path), "--threads", "2"]) == 0
    best = json.load(open(tmp_path / "best.json"))
    assert (best["lr"], best["weight_decay"], best["gamma"]) == (0.003, 0.01, 2)
    with open(tmp_path / "trials.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 1


def test_evaluate_reports_accuracy(tmp_path):
    cfg = write(tmp_path, TRAIN_INI.format(epochs=1))
    cli.main(["train", "--config", cfg, "--out", str(tmp_path / "t")])
    assert cli.main(["evaluate", "--config", cfg, "--checkpoint", str(tmp_path / "t" / "model.petk"), "--out", str(tmp_path / "e")]) == 0
    acc = json.load(open(tmp_path / "e" / "summary.json"))["accuracy"]
    assert set(acc) == {"train", "val", "test"} and all(0 <= v <= 1 for v in acc.values())


def test_analyze_cka_and_mmd(tmp_path):
    cfg = write(tmp_path, TRAIN_INI.format(epochs=1))
    cli.main(["train", "--config", cfg, "--out", str(tmp_path / "t")])
    model = str(tmp_path / "t" / "model.petk")
    assert cli.main(["analyze", "cka", model, model, "--out", str(tmp_path / "c")]) == 0
    assert json.load(open(tmp_path / "c" / "report.json"))["mean_cka"] == pytest.approx(1.0, abs=1e-9)
    assert cli.main(["analyze", "features", model, "--config", cfg, "--out", str(tmp_path / "f")]) == 0
    feats = str(tmp_path / "f" / "features.bin")
    assert cli.main(["analyze", "mmd", feats, feats, "--bandwidth", "1.5", "--out", str(tmp_path / "m")]) == 0
    report = json.load(open(tmp_path / "m" / "report.json"))
    assert report["mmd"] == 0.0 and report["bandwidth"] == 1.5


def test_gen_data_writes_loadable_container(tmp_path):
    assert cli.main(["gen-data", "--kind", "orientation", "--classes", "3", "--samples-per-class", "2", "--image-size", "8", "--out", str(tmp_path)]) == 0
    from convadapt.data import load_dataset

    ds = load_dataset(tmp_path / "orientation.petd")
    assert len(ds) == 6 and np.all(ds.class_counts() == 2)


def test_gradcheck_command(tmp_path):
    cfg = write(tmp_path, "[gradcheck]\nseeds = 1\nschemes = conv_parallel\nmax_coords = 8\n")
    assert cli.main(["gradcheck", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert json.load(open(tmp_path / "report.json"))["passed"] is True


@pytest.mark.parametrize(
    "text, message",
    [
        ("[train]\nlearning_rate = 1\n", "unknown key 'learning_rate'"),
        ("[optimizer]\n", "unknown config section"),
        ("[train]\nlr = fast\n", "lr"),
        ("[backbone]\npreset = vgg\n", "preset"),
        ("[backbone]\npreset = toy\nstages = 8,4,8,1\n", "not both"),
        ("[backbone]\nstages = 8,x\n", "stages"),
        ("[adapter]\ngamma = 3\n", "gamma"),
        ("[mode]\nkind = bias\nscheme = conv_parallel\n", "adapter mode"),
        ("[data]\ntest_fraction = 1.5\n", "test_fraction"),
        ("no section header\n", "INI"),
    ],
)
def test_invalid_config_exits_nonzero(tmp_path, capsys, text, message):
    cfg = write(tmp_path, text)
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_BAD_INPUT
    assert message in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["train", "--config", str(tmp_path / "nope.ini")]) == cli.EXIT_BAD_INPUT
    assert "cannot read config" in capsys.readouterr().err


def test_analyze_arity(tmp_path, capsys):
    assert cli.main(["analyze", "cka", "one.petk", "--out", str(tmp_path)]) == cli.EXIT_BAD_INPUT
