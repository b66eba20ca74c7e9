"""Command-line pipeline driver.

Exit codes: 0 on success, 1 on runtime failures, 2 on invalid input or
configuration.  Every subcommand writes its artifacts under one output
directory with fixed names, prints its result tables as aligned text, and
finishes by writing manifest.json with the config hash, seed, and a
SHA-256 per artifact.  Outputs are seeded and atomically written, so a
rerun with the same config and seed reproduces every artifact byte except
the manifest timestamp.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import augment as aug
from . import dataset as ds
from . import evaluation as ev
from . import figures as figs
from . import pruning as pr
from . import spectral as sp
from . import transform as tr
from .config import (
    RunConfig,
    config_hash,
    load_config,
    model_config_from,
    train_config_from,
)
from .errors import (
    ConfigError,
    ConstantSeriesError,
    DomainError,
    EmptyFileError,
    GafDiagError,
    ParseError,
    RateOutOfRangeError,
    TooShortError,
)
from .net.model import FusionModel, load_model, save_model
from .net.train import train
from .util import atomic_write_text, derive_rng, sha256_file, write_csv

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

# these indicate bad input or configuration rather than a runtime fault
INPUT_ERRORS = (
    ConfigError,
    ConstantSeriesError,
    DomainError,
    EmptyFileError,
    ParseError,
    RateOutOfRangeError,
    TooShortError,
    FileNotFoundError,
)


def print_table(header, rows):
    """Aligned text rendering of the same table a CSV artifact holds."""
    cells = [[str(h) for h in header]]
    for row in rows:
        cells.append([
            f"{v:.6g}" if isinstance(v, float) else str(v) for v in row
        ])
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for row in cells:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())


def write_manifest(out_dir: Path, command, cfg: RunConfig, artifacts):
    payload = {
        "command": command,
        "config_sha256": config_hash(cfg),
        "seed": cfg.get("run", "seed"),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "artifacts": {
            name: sha256_file(path) for name, path in sorted(artifacts.items())
        },
    }
    atomic_write_text(out_dir / "manifest.json",
                      json.dumps(payload, indent=2, sort_keys=True) + "\n")


def resolve_config(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.values["run"]["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        cfg.values["run"]["out_dir"] = str(args.out)
    out_dir = Path(cfg.get("run", "out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    return cfg, out_dir


def load_pairs(cfg: RunConfig):
    v = cfg.values
    if v["data"]["source"] != "synthetic":
        raise ConfigError(
            "labelled training data requires data.source = synthetic"
        )
    return ds.build_synthetic_dataset(
        seed=v["run"]["seed"],
        windows_per_class=v["data"]["windows_per_class"],
        window_len=v["data"]["window"],
        image_size=v["image"]["size"],
        test_fraction=v["data"]["test_fraction"],
        spec_overrides={
            "sample_rate": v["data"]["sample_rate"],
            "duration": v["data"]["duration"],
            "shaft_freq": v["data"]["shaft_freq"],
            "base_noise_epsilon": v["data"]["base_noise"],
        },
    )


def checkpoint_path(args, out_dir: Path) -> Path:
    if getattr(args, "checkpoint", None):
        return Path(args.checkpoint)
    return out_dir / "checkpoint.gfd"


def load_checkpoint(args, out_dir: Path) -> FusionModel:
    path = checkpoint_path(args, out_dir)
    if not path.exists():
        raise FileNotFoundError(f"no checkpoint at {path}; run train first")
    return load_model(path)


# --- subcommands ----------------------------------------------------------


def cmd_transform(args):
    cfg, out_dir = resolve_config(args)
    size = args.size if args.size is not None else cfg.get("image", "size")
    window_len = cfg.get("data", "window")
    series = ds.load_csv(args.input)
    source_id = Path(args.input).stem
    windows = ds.window_series(series, window_len, cfg.get("data", "stride"),
                               source_id=source_id)
    artifacts = {}
    for window in windows:
        scaled = tr.minmax_scale(tr.subsample(window.values, size))
        matrix = tr.gaf_matrix(scaled)
        image = tr.to_gray(matrix)
        stem_name = f"{source_id}_{window.offset}"
        pgm = out_dir / f"{stem_name}.pgm"
        gaf = out_dir / f"{stem_name}.csv"
        tr.write_pgm(image, pgm)
        tr.write_gaf_csv(matrix, gaf)
        artifacts[pgm.name] = pgm
        artifacts[gaf.name] = gaf
    if windows:
        last_png = out_dir / "image.png"
        figs.save_image_figure(image, last_png)
        artifacts[last_png.name] = last_png
    write_manifest(out_dir, "transform", cfg, artifacts)
    print(f"wrote {len(windows)} images")
    return EXIT_OK


def cmd_synth(args):
    cfg, out_dir = resolve_config(args)
    train_pairs, test_pairs = load_pairs(cfg)
    artifacts = {}
    dataset_csv = out_dir / "dataset.csv"
    ds.write_manifest(dataset_csv, train_pairs, test_pairs)
    artifacts[dataset_csv.name] = dataset_csv
    seen = set()
    for pair in train_pairs:
        if pair.label in seen:
            continue
        seen.add(pair.label)
        pgm = out_dir / f"sample_{pair.label.name.lower()}.pgm"
        tr.write_pgm(pair.image, pgm)
        artifacts[pgm.name] = pgm
    counts = {}
    for pair in train_pairs + test_pairs:
        counts[pair.label] = counts.get(pair.label, 0) + 1
    rows = [(label.name, counts[label], len(train_pairs), len(test_pairs))
            for label in sorted(counts, key=lambda l: l.value)]
    print_table(("label", "windows", "train_total", "test_total"), rows)
    write_manifest(out_dir, "synth", cfg, artifacts)
    print(f"wrote {len(train_pairs) + len(test_pairs)} windows")
    return EXIT_OK


def cmd_augment(args):
    cfg, out_dir = resolve_config(args)
    v = cfg.values
    size = v["image"]["size"]
    seed = v["run"]["seed"]
    if args.input:
        series = ds.load_csv(args.input).values
        if series.size > v["data"]["window"]:
            series = series[: v["data"]["window"]]
    else:
        spec = ds.SyntheticSpec.for_label(
            ds.ClassLabel.Normal,
            sample_rate=v["data"]["sample_rate"],
            duration=v["data"]["duration"],
            shaft_freq=v["data"]["shaft_freq"],
            base_noise_epsilon=v["data"]["base_noise"],
        )
        series = ds.synthetic_signal(spec, ds.ClassLabel.Normal, seed)
        series = series[: v["data"]["window"]]
    base_image = tr.series_to_image(series, size)
    artifacts = {}
    rows = []
    for i, eps in enumerate(v["augment"]["epsilons"]):
        if eps > 0:
            noisy = aug.add_series_noise(series, eps,
                                         derive_rng(seed, "augment", "noise", i))
            image = tr.series_to_image(noisy, size)
        else:
            image = base_image
        pgm = out_dir / f"noisy_{i}.pgm"
        tr.write_pgm(image, pgm)
        artifacts[pgm.name] = pgm
        snr = aug.epsilon_to_snr(eps) if eps > 0 else float("inf")
        rows.append(("series_noise", eps, snr, pgm.name))
    schedule = aug.make_schedule(v["augment"]["diffusion_steps"],
                                 v["augment"]["beta_start"],
                                 v["augment"]["beta_end"])
    # forward noising stays below a quarter of the schedule so the image
    # keeps visible structure
    t_max = max(1, schedule.steps // 4)
    steps = sorted({max(1, (t_max * k) // 4) for k in range(1, 5)})
    for t in steps:
        image = aug.diffuse_image(base_image, t, schedule,
                                  derive_rng(seed, "augment", "diffuse", t))
        pgm = out_dir / f"diffused_{t}.pgm"
        tr.write_pgm(image, pgm)
        artifacts[pgm.name] = pgm
        rows.append(("diffusion", t, float(schedule.alpha_bar[t - 1]), pgm.name))
    csv_path = out_dir / "augment.csv"
    write_csv(csv_path, ("kind", "parameter", "scale", "artifact"), rows)
    artifacts[csv_path.name] = csv_path
    png = out_dir / "augment.png"
    figs.save_image_figure(image, png)
    artifacts[png.name] = png
    print_table(("kind", "parameter", "scale", "artifact"), rows)
    write_manifest(out_dir, "augment", cfg, artifacts)
    return EXIT_OK


def cmd_train(args):
    cfg, out_dir = resolve_config(args)
    train_pairs, test_pairs = load_pairs(cfg)
    model = FusionModel(model_config_from(cfg), seed=cfg.get("run", "seed"))
    tcfg = train_config_from(cfg)

    def log(row):
        print(f"epoch {row['epoch']}: lr={row['lr']:.6g} "
              f"loss={row['loss']:.4f} acc={row['train_accuracy']:.4f}")

    history = train(model, train_pairs, tcfg, log=log)
    artifacts = {}
    ckpt = out_dir / "checkpoint.gfd"
    save_model(model, ckpt)
    artifacts[ckpt.name] = ckpt
    hist_csv = out_dir / "history.csv"
    write_csv(hist_csv, ("epoch", "lr", "loss", "train_accuracy"),
              [(r["epoch"], r["lr"], r["loss"], r["train_accuracy"])
               for r in history])
    artifacts[hist_csv.name] = hist_csv
    if history:
        png = out_dir / "history.png"
        figs.save_history_figure(history, png)
        artifacts[png.name] = png
    acc = pr.accuracy_on(model, test_pairs, tcfg.loss_mode)
    print(f"test accuracy = {acc:.4f}")
    write_manifest(out_dir, "train", cfg, artifacts)
    return EXIT_OK


def cmd_evaluate(args):
    cfg, out_dir = resolve_config(args)
    model = load_checkpoint(args, out_dir)
    _train_pairs, test_pairs = load_pairs(cfg)
    loss_mode = cfg.get("model", "loss_mode")
    acc = pr.accuracy_on(model, test_pairs, loss_mode)
    rows = [("accuracy", acc), ("test_samples", len(test_pairs)),
            ("loss_mode", loss_mode)]
    csv_path = out_dir / "metrics.csv"
    write_csv(csv_path, ("metric", "value"), rows)
    print_table(("metric", "value"), rows)
    write_manifest(out_dir, "evaluate", cfg, {csv_path.name: csv_path})
    return EXIT_OK


def cmd_sweep(args):
    cfg, out_dir = resolve_config(args)
    model = load_checkpoint(args, out_dir)
    _train_pairs, test_pairs = load_pairs(cfg)
    v = cfg.values
    loss_mode = v["model"]["loss_mode"]
    seed = v["run"]["seed"]
    epsilons = v["augment"]["epsilons"]
    rows = []
    ap_rows = []
    series_rows = None
    for kind in ev.CORRUPTION_MODES:
        kind_rows = ev.robustness_sweep(model, test_pairs, epsilons, seed,
                                        mode=kind, loss_mode=loss_mode)
        if kind == "series":
            series_rows = kind_rows
        for row in kind_rows:
            rows.append((kind, row["epsilon"], row["accuracy"]))
        if len(kind_rows) >= 2 and kind_rows[-1]["epsilon"] > 0:
            ap_rows.append((kind, ev.ap_from_sweep(kind_rows)))
    artifacts = {}
    sweep_csv = out_dir / "sweep.csv"
    write_csv(sweep_csv, ("kind", "epsilon", "accuracy"), rows)
    artifacts[sweep_csv.name] = sweep_csv
    if ap_rows:
        ap_csv = out_dir / "ap.csv"
        write_csv(ap_csv, ("kind", "ap"), ap_rows)
        artifacts[ap_csv.name] = ap_csv
    if series_rows and len(series_rows) >= 2:
        png = out_dir / "sweep.png"
        ap_map = dict(ap_rows)
        figs.save_sweep_figure(series_rows, png, ap=ap_map.get("series"))
        artifacts[png.name] = png
    print_table(("kind", "epsilon", "accuracy"), rows)
    for kind, ap in ap_rows:
        print(f"ap[{kind}] = {ap:.4f}")
    write_manifest(out_dir, "sweep", cfg, artifacts)
    return EXIT_OK


def cmd_prune(args):
    cfg, out_dir = resolve_config(args)
    model = load_checkpoint(args, out_dir)
    train_pairs, test_pairs = load_pairs(cfg)
    v = cfg.values
    rows = pr.sweep(
        model, train_pairs, test_pairs, v["prune"]["rates"],
        train_config_from(cfg),
        finetune_epochs=v["prune"]["finetune_epochs"],
        normalized=v["prune"]["normalized_selector"],
    )
    header = ("rate", "pruned_channels", "total_channels",
              "accuracy_before", "accuracy_after", "selector")
    table = [tuple(r[k] for k in header) for r in rows]
    artifacts = {}
    report_csv = out_dir / "prune_report.csv"
    write_csv(report_csv, header, table)
    artifacts[report_csv.name] = report_csv
    png = out_dir / "prune_report.png"
    figs.save_prune_figure(rows, png)
    artifacts[png.name] = png
    best = pr.select_optimal(rows)
    print_table(header, table)
    print(f"selected rate = {best['rate']:g} (selector {best['selector']:.4f})")
    write_manifest(out_dir, "prune", cfg, artifacts)
    return EXIT_OK


def cmd_ablate(args):
    cfg, out_dir = resolve_config(args)
    train_pairs, test_pairs = load_pairs(cfg)
    rows = ev.ablation_run(model_config_from(cfg), train_pairs, test_pairs,
                           train_config_from(cfg))
    header = ("variant", "disabled", "accuracy", "noisy_accuracy")
    table = [tuple(r[k] for k in header) for r in rows]
    artifacts = {}
    csv_path = out_dir / "ablation.csv"
    write_csv(csv_path, header, table)
    artifacts[csv_path.name] = csv_path
    png = out_dir / "ablation.png"
    figs.save_ablation_figure(rows, png)
    artifacts[png.name] = png
    print_table(header, table)
    write_manifest(out_dir, "ablate", cfg, artifacts)
    return EXIT_OK


def cmd_spectrum(args):
    cfg, out_dir = resolve_config(args)
    v = cfg.values
    n = v["spectral"]["length"]
    sigma = v["spectral"]["sigma"]
    trials = v["spectral"]["trials"]
    seed = v["run"]["seed"]
    summary = []
    for kind, complex_input in (("real", False), ("complex", True)):
        emp, theory, rel = sp.verify_noise_spectrum(
            n, sigma, trials, derive_rng(seed, "spectrum", kind), complex_input
        )
        summary.append((kind, emp, theory, rel))
    rng = derive_rng(seed, "spectrum", "sample")
    sample = rng.normal(0.0, sigma, n)
    spectrum = sp.dft(sample)
    artifacts = {}
    spec_csv = out_dir / "spectrum.csv"
    sp.write_spectrum_csv(spectrum, spec_csv)
    artifacts[spec_csv.name] = spec_csv
    summary_csv = out_dir / "spectrum_summary.csv"
    write_csv(summary_csv, ("input", "empirical", "predicted", "rel_err"),
              summary)
    artifacts[summary_csv.name] = summary_csv
    png = out_dir / "spectrum.png"
    figs.save_spectrum_figure(
        spectrum, png, theory=sp.noise_spectrum_theory(n, sigma, False)
    )
    artifacts[png.name] = png
    print_table(("input", "empirical", "predicted", "rel_err"), summary)
    write_manifest(out_dir, "spectrum", cfg, artifacts)
    return EXIT_OK


def cmd_kl(args):
    cfg, out_dir = resolve_config(args)
    model = load_checkpoint(args, out_dir)
    _train_pairs, test_pairs = load_pairs(cfg)
    v = cfg.values
    seed = v["run"]["seed"]
    epsilons = [e for e in v["augment"]["epsilons"] if e > 0]
    if not epsilons:
        raise ConfigError("kl needs a positive epsilon in augment.epsilons")
    eps = max(epsilons)
    mode = v["augment"]["mode"]
    corrupted = ev.corrupt_pairs(test_pairs, mode, eps, seed,
                                 model.config.image_size)

    def mean_feature(pairs):
        total = None
        for pair in pairs:
            feats = model.branch_features(
                pair.window.values[None, None, :],
                tr.pixels_to_unit(pair.image.pixels)[None, None, :, :],
            )
            vec = np.concatenate([feats["series"][0], feats["global"][0],
                                  feats["transformer"][0]])
            total = vec if total is None else total + vec
        return total / len(pairs)

    p = ev.feature_to_distribution(mean_feature(test_pairs))
    q = ev.feature_to_distribution(mean_feature(corrupted))
    value = ev.kl_divergence(p, q)
    artifacts = {}
    kl_path = out_dir / "kl.txt"
    atomic_write_text(kl_path, f"{value!r}\n")
    artifacts[kl_path.name] = kl_path
    png = out_dir / "kl.png"
    figs.save_distribution_figure(
        p, q, png,
        title=f"feature distributions, KL = {value:.4f}",
        q_label=f"corrupted ({mode}, eps={eps:g})",
    )
    artifacts[png.name] = png
    print(f"kl = {value!r} (mode={mode}, epsilon={eps:g})")
    write_manifest(out_dir, "kl", cfg, artifacts)
    return EXIT_OK


# --- entry point ----------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gafdiag",
        description="Bearing-signal imaging, fusion classification, pruning,"
                    " and robustness studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file; defaults apply if omitted")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", help="override run.out_dir")

    p = sub.add_parser("transform", help="image a series CSV window by window")
    common(p)
    p.add_argument("--input", required=True, help="CSV, one value per line")
    p.add_argument("--size", type=int, help="override image.size")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("synth", help="generate the synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="write noisy and diffused images")
    common(p)
    p.add_argument("--input", help="optional series CSV; synthetic if omitted")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train the fusion model")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="clean test accuracy of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", help="path to checkpoint.gfd")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="accuracy under corruption sweeps")
    common(p)
    p.add_argument("--checkpoint", help="path to checkpoint.gfd")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("prune", help="channel pruning sweep and selection")
    common(p)
    p.add_argument("--checkpoint", help="path to checkpoint.gfd")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("ablate", help="branch ablation study")
    common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("spectrum", help="verify the noise spectrum prediction")
    common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("kl", help="feature-distribution divergence under noise")
    common(p)
    p.add_argument("--checkpoint", help="path to checkpoint.gfd")
    p.set_defaults(func=cmd_kl)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except GafDiagError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
