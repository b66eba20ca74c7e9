"""Command-line interface: artifacts, exit codes, printed summaries, and
the run manifest.  Heavier commands run at a reduced scale via a shared
config so the whole module stays fast."""

from __future__ import annotations

import hashlib
import json

import numpy as np
import pytest

from gafdiag.cli import main

MICRO_INI = """\
[data]
windows_per_class = 4

[image]
size = 32

[model]
series_channels = 8
image_channels = 8

[train]
epochs = 1

[augment]
epsilons = 0, 0.2
diffusion_steps = 40

[prune]
rates = 0, 0.5
finetune_epochs = 1

[spectral]
length = 64
trials = 200
"""


@pytest.fixture(scope="module")
def micro(tmp_path_factory):
    """One trained micro run shared by the checkpoint-consuming tests."""
    root = tmp_path_factory.mktemp("micro")
    ini = root / "run.ini"
    ini.write_text(MICRO_INI)
    out = root / "out"
    rc = main(["train", "--config", str(ini), "--out", str(out)])
    assert rc == 0
    return ini, out


def write_series_csv(path, n=256, seed=0):
    values = np.random.default_rng(seed).normal(size=n)
    path.write_text("".join(f"{float(v)!r}\n" for v in values))
    return path


def read_manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text())


def test_transform_writes_images_and_manifest(tmp_path, capsys):
    csv = write_series_csv(tmp_path / "rig.csv")
    out = tmp_path / "out"
    rc = main(["transform", "--input", str(csv), "--out", str(out), "--size", "64"])
    assert rc == 0
    assert "wrote 2 images" in capsys.readouterr().out
    for offset in (0, 128):
        assert (out / f"rig_{offset}.pgm").exists()
        assert (out / f"rig_{offset}.csv").exists()
    assert (out / "image.png").exists()
    manifest = read_manifest(out)
    assert manifest["command"] == "transform"
    assert "rig_0.pgm" in manifest["artifacts"]


def test_transform_pgm_byte_layout(tmp_path):
    csv = write_series_csv(tmp_path / "rig.csv", n=128)
    out = tmp_path / "out"
    assert main(["transform", "--input", str(csv), "--out", str(out), "--size", "64"]) == 0
    blob = (out / "rig_0.pgm").read_bytes()
    header = b"P5\n64 64\n255\n"
    assert blob.startswith(header)
    assert len(blob) == len(header) + 64 * 64


def test_transform_missing_input_exits_2(tmp_path, capsys):
    rc = main(["transform", "--input", str(tmp_path / "absent.csv"),
               "--out", str(tmp_path / "out")])
    assert rc == 2
    err = capsys.readouterr().err
    assert err.startswith("error: FileNotFoundError:")
    assert err.count("\n") == 1  # a single line


def test_transform_constant_input_exits_2(tmp_path, capsys):
    csv = tmp_path / "flat.csv"
    csv.write_text("1.0\n" * 200)
    rc = main(["transform", "--input", str(csv), "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "ConstantSeriesError" in capsys.readouterr().err


def test_transform_parse_error_exits_2(tmp_path, capsys):
    csv = tmp_path / "bad.csv"
    csv.write_text("1.0\n2.0\nbroken\n")
    rc = main(["transform", "--input", str(csv), "--out", str(tmp_path / "out")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "ParseError" in err and ":3:" in err


def test_bad_config_exits_2(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[train]\nwarp_speed = 9\n")
    rc = main(["synth", "--config", str(ini), "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "ConfigError" in capsys.readouterr().err


def test_synth_writes_dataset(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text(MICRO_INI)
    out = tmp_path / "out"
    rc = main(["synth", "--config", str(ini), "--out", str(out)])
    assert rc == 0
    assert "wrote 16 windows" in capsys.readouterr().out
    lines = (out / "dataset.csv").read_text().strip().splitlines()
    assert lines[0] == "source_id,label,split,window_offset"
    assert len(lines) == 17
    for name in ("normal", "innerrace", "outerrace", "ball"):
        assert (out / f"sample_{name}.pgm").exists()
    # manifest hashes really are the artifact digests
    manifest = read_manifest(out)
    recorded = manifest["artifacts"]["dataset.csv"]
    actual = hashlib.sha256((out / "dataset.csv").read_bytes()).hexdigest()
    assert recorded == actual


def test_augment_artifacts(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(MICRO_INI)
    out = tmp_path / "out"
    rc = main(["augment", "--config", str(ini), "--out", str(out)])
    assert rc == 0
    # one image per noise strength, indexed by position
    assert (out / "noisy_0.pgm").exists()
    assert (out / "noisy_1.pgm").exists()
    # quarter-schedule diffusion snapshots for steps=40 land at 2,5,7,10
    for t in (2, 5, 7, 10):
        assert (out / f"diffused_{t}.pgm").exists()
    table = (out / "augment.csv").read_text().strip().splitlines()
    assert table[0] == "kind,parameter,scale,artifact"
    assert (out / "augment.png").exists()


def test_spectrum_artifacts(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text(MICRO_INI)
    out = tmp_path / "out"
    rc = main(["spectrum", "--config", str(ini), "--out", str(out)])
    assert rc == 0
    assert "real" in capsys.readouterr().out
    lines = (out / "spectrum_summary.csv").read_text().strip().splitlines()
    assert lines[0] == "input,empirical,predicted,rel_err"
    rows = {l.split(",")[0]: l.split(",") for l in lines[1:]}
    assert set(rows) == {"real", "complex"}
    for row in rows.values():
        assert float(row[3]) < 0.05
    # per-bin sample has one row per frequency
    sample = (out / "spectrum.csv").read_text().strip().splitlines()
    assert len(sample) == 1 + 64
    assert (out / "spectrum.png").exists()


def test_train_artifacts(micro):
    _ini, out = micro
    assert (out / "checkpoint.gfd").exists()
    lines = (out / "history.csv").read_text().strip().splitlines()
    assert lines[0] == "epoch,lr,loss,train_accuracy"
    assert len(lines) == 2  # one epoch
    assert (out / "history.png").exists()
    manifest = read_manifest(out)
    assert manifest["command"] == "train"
    assert set(manifest["artifacts"]) == {
        "checkpoint.gfd", "history.csv", "history.png"
    }


def test_evaluate_reports_accuracy(micro, capsys):
    ini, out = micro
    rc = main(["evaluate", "--config", str(ini), "--out", str(out)])
    assert rc == 0
    assert "accuracy" in capsys.readouterr().out
    lines = (out / "metrics.csv").read_text().strip().splitlines()
    assert lines[0] == "metric,value"
    metrics = dict(l.split(",", 1) for l in lines[1:])
    assert 0.0 <= float(metrics["accuracy"]) <= 1.0
    assert metrics["test_samples"] == "4"


def test_evaluate_without_checkpoint_exits_2(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text(MICRO_INI)
    rc = main(["evaluate", "--config", str(ini), "--out", str(tmp_path / "empty")])
    assert rc == 2
    assert "FileNotFoundError" in capsys.readouterr().err


def test_sweep_outputs(micro, capsys):
    ini, out = micro
    rc = main(["sweep", "--config", str(ini), "--out", str(out)])
    assert rc == 0
    stdout = capsys.readouterr().out
    for kind in ("series", "image", "both"):
        assert f"ap[{kind}] = " in stdout
    lines = (out / "sweep.csv").read_text().strip().splitlines()
    assert lines[0] == "kind,epsilon,accuracy"
    assert len(lines) == 1 + 3 * 2  # three kinds x two strengths
    ap_lines = (out / "ap.csv").read_text().strip().splitlines()
    assert ap_lines[0] == "kind,ap"
    assert len(ap_lines) == 4
    assert (out / "sweep.png").exists()


def test_prune_outputs(micro, capsys):
    ini, out = micro
    rc = main(["prune", "--config", str(ini), "--out", str(out)])
    assert rc == 0
    assert "selected rate = " in capsys.readouterr().out
    lines = (out / "prune_report.csv").read_text().strip().splitlines()
    header = "rate,pruned_channels,total_channels,accuracy_before,accuracy_after,selector"
    assert lines[0] == header
    assert len(lines) == 3  # rates 0 and 0.5
    assert (out / "prune_report.png").exists()


def test_kl_outputs(micro, capsys):
    ini, out = micro
    rc = main(["kl", "--config", str(ini), "--out", str(out)])
    assert rc == 0
    assert "kl = " in capsys.readouterr().out
    value = float((out / "kl.txt").read_text())
    assert np.isfinite(value)
    assert value >= -1e-12
    assert (out / "kl.png").exists()


def test_ablate_outputs(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text(MICRO_INI)
    out = tmp_path / "out"
    rc = main(["ablate", "--config", str(ini), "--out", str(out)])
    assert rc == 0
    assert "no_series" in capsys.readouterr().out
    lines = (out / "ablation.csv").read_text().strip().splitlines()
    assert lines[0] == "variant,disabled,accuracy,noisy_accuracy"
    variants = [l.split(",")[0] for l in lines[1:]]
    assert variants == ["full", "no_series", "no_global", "no_transformer"]
    assert (out / "ablation.png").exists()


def test_train_runs_are_byte_identical(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(MICRO_INI)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["train", "--config", str(ini), "--out", str(out_a)]) == 0
    assert main(["train", "--config", str(ini), "--out", str(out_b)]) == 0
    ckpt_a = (out_a / "checkpoint.gfd").read_bytes()
    ckpt_b = (out_b / "checkpoint.gfd").read_bytes()
    assert ckpt_a == ckpt_b
    assert (out_a / "history.csv").read_bytes() == (out_b / "history.csv").read_bytes()


def test_seed_override_changes_the_run(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(MICRO_INI)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["train", "--config", str(ini), "--out", str(out_a)]) == 0
    assert main(["train", "--config", str(ini), "--out", str(out_b),
                 "--seed", "1"]) == 0
    assert (out_a / "checkpoint.gfd").read_bytes() != (
        out_b / "checkpoint.gfd"
    ).read_bytes()
