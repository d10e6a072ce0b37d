"""Command-line interface.

Exit codes: 0 success, 1 validation error (bad input or arguments),
2 runtime error.
"""
from __future__ import annotations

import csv
import sys
from pathlib import Path

import click

from .ensemble import evaluate as evaluate_model
from .ensemble import train_boosted
from .errors import ValidationError
from .memd import decompose
from .nonlinear_features import IMF_FEATURES, PAIR_FEATURE
from .pipeline import (ExperimentConfig, build_dataset, cross_validate, cv_evaluator,
                       design_matrix, evaluate_regions, export_psd, prepare_frames,
                       read_features_csv, restrict_channels, write_config_echo,
                       write_cv_reports, write_features_csv, zscore_fit)
from .selection import rank_features, rank_imfs
from .signal_model import load_dataset

MODES = ("memd", "dwt", "dft", "memd-dwt")


def _config(ctx) -> ExperimentConfig:
    o = ctx.obj
    cfg = ExperimentConfig.load(o["config"]) if o["config"] else ExperimentConfig()
    if o["mode"]:
        cfg = cfg.with_mode(o["mode"])
    if o["seed"] is not None:
        cfg = cfg.with_seed(o["seed"])
    return cfg


def _out(ctx) -> Path:
    out = Path(ctx.obj["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _recordings(ctx, cfg):
    data = ctx.obj["data"]
    if data is None:
        raise ValidationError("--data is required")
    recs = load_dataset(data)
    if not recs:
        raise ValidationError(f"no recordings (CSV + JSON manifest) in {data}")
    if cfg.regions is not None:
        missing = set(cfg.regions) - set(recs[0].channel_labels)
        if missing:
            raise ValidationError(f"config regions name unknown channels {sorted(missing)}")
    return recs


def _dataset(ctx, cfg, imfs=None):
    """Feature dataset from a feature CSV or a recording directory."""
    data = ctx.obj["data"]
    if data is not None and Path(data).is_file():
        ds = read_features_csv(data)
    else:
        ds = build_dataset(_recordings(ctx, cfg), cfg, imfs)
    if cfg.regions is not None:
        ds = restrict_channels(ds, cfg.regions)
    if not ds:
        raise ValidationError("no frames could be cut from the data")
    return ds


def _finish(cfg, path, command):
    write_config_echo(cfg, path, {"command": command})
    click.echo(str(path))


@click.group()
@click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
              help="YAML or JSON experiment file.")
@click.option("--data", type=click.Path(), default=None,
              help="Recording directory (CSV + JSON manifests) or a feature CSV.")
@click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None)
@click.option("--mode", type=click.Choice(MODES, case_sensitive=False), default=None)
@click.pass_context
def cli(ctx, config, data, out, seed, mode):
    """Two-state EEG classification with MEMD features and boosted forests."""
    ctx.obj = {"config": config, "data": data, "out": out, "seed": seed, "mode": mode}


@cli.command("decompose")
@click.pass_context
def decompose_cmd(ctx):
    """Decompose every frame and write one IMF directory per frame."""
    cfg = _config(ctx)
    out = _out(ctx)
    path = out / "decompositions.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial_id", "frame", "start_s", "label", "n_extracted", "directory"])
        counters = {}
        for frame in prepare_frames(_recordings(ctx, cfg), cfg):
            k = counters.get(frame.trial_id, 0)
            counters[frame.trial_id] = k + 1
            stack = decompose(frame.samples, cfg.sift)
            sub = Path(frame.trial_id) / f"frame_{k:03d}"
            stack.save(out / sub, frame.channel_labels)
            w.writerow([frame.trial_id, k, repr(frame.start_s), frame.label.value,
                        stack.n_extracted, sub.as_posix()])
    _finish(cfg, path, "decompose")


@cli.command()
@click.pass_context
def extract(ctx):
    """Write the per-frame feature table for the configured mode."""
    cfg = _config(ctx)
    path = _out(ctx) / "features.csv"
    write_features_csv(_dataset(ctx, cfg), path)
    _finish(cfg, path, "extract")


@cli.command("rank-imfs")
@click.option("--k", default=5, show_default=True, help="Number of IMFs to select.")
@click.option("--threshold", type=float, default=None, help="Select by solo accuracy instead.")
@click.pass_context
def rank_imfs_cmd(ctx, k, threshold):
    """Correlation with the raw signal and solo accuracy for every IMF."""
    cfg = _config(ctx).with_mode("memd")
    ds = _dataset(ctx, cfg, imfs=tuple(range(1, cfg.sift.max_imfs + 1)))
    ranking = rank_imfs(ds, cv_evaluator(cfg), k=k, threshold=threshold)
    path = _out(ctx) / "imf_ranking.csv"
    ranking.write_csv(path)
    _finish(cfg, path, "rank-imfs")


@cli.command("rank-features")
@click.option("--top", "top_m", default=6, show_default=True, help="Number of features to select.")
@click.option("--threshold", type=float, default=None, help="Select by solo accuracy instead.")
@click.pass_context
def rank_features_cmd(ctx, top_m, threshold):
    """Solo accuracy of every MEMD feature over the selected IMFs."""
    from dataclasses import replace
    names = IMF_FEATURES + (PAIR_FEATURE,)
    cfg = replace(_config(ctx).with_mode("memd"), selected_features=names)
    ds = _dataset(ctx, cfg)
    present = [n for n in names if any(c.endswith("_" + n) for c in ds[0].features.names)]
    ranking = rank_features(ds, present, cv_evaluator(cfg), top_m=top_m, threshold=threshold)
    path = _out(ctx) / "feature_ranking.csv"
    ranking.write_csv(path)
    _finish(cfg, path, "rank-features")


@cli.command()
@click.pass_context
def train(ctx):
    """Fit one boosted ensemble on all frames and save it with its normaliser."""
    import json
    cfg = _config(ctx)
    ds = _dataset(ctx, cfg)
    X, y, _, names = design_matrix(ds)
    mu, sd = zscore_fit(X)
    model = train_boosted((X - mu) / sd, y, cfg.boost)
    out = _out(ctx)
    model.save(out / "model.json")
    (out / "model_scaling.json").write_text(json.dumps(
        {"features": list(names), "mean": mu.tolist(), "std": sd.tolist()}))
    res = evaluate_model(model, (X - mu) / sd, y)
    path = out / "train_report.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "alpha", "weighted_error", "normalizer"])
        for t, (a, e, z) in enumerate(zip(model.alphas, model.errors, model.normalizers), 1):
            w.writerow([t, repr(a), repr(e), repr(z)])
        w.writerow(["training_accuracy", repr(res["accuracy"]), "", ""])
    _finish(cfg, path, "train")


@cli.command()
@click.pass_context
def evaluate(ctx):
    """Repeated trial-level cross-validation report."""
    cfg = _config(ctx)
    report = cross_validate(_dataset(ctx, cfg), cfg)
    path = _out(ctx) / "cv_report.csv"
    write_cv_reports({cfg.feature_mode.value: report}, path)
    _finish(cfg, path, "evaluate")


@cli.command()
@click.option("--region", "regions", multiple=True, help="Region label (repeatable); default all.")
@click.pass_context
def regions(ctx, regions):
    """Cross-validation restricted to each region's channels."""
    cfg = _config(ctx)
    reports = evaluate_regions(_dataset(ctx, cfg), cfg.region_groups, cfg, regions or None)
    path = _out(ctx) / "region_report.csv"
    write_cv_reports(reports, path)
    _finish(cfg, path, "regions")


@cli.command()
@click.pass_context
def psd(ctx):
    """Mean PSD per channel and state."""
    cfg = _config(ctx)
    path = _out(ctx) / "psd.csv"
    export_psd(_recordings(ctx, cfg), path, cfg)
    _finish(cfg, path, "psd")


@cli.command()
@click.option("--trials", default=8, show_default=True)
@click.option("--state-s", default=60.0, show_default=True, help="Seconds per state.")
@click.pass_context
def simulate(ctx, trials, state_s):
    """Write a synthetic two-state dataset into --out."""
    from .synthetic import SurrogateSpec, surrogate_dataset, write_dataset
    seed = ctx.obj["seed"] or 0
    recs = surrogate_dataset(SurrogateSpec(state_s=state_s), trials, seed)
    write_dataset(recs, _out(ctx))
    click.echo(f"{len(recs)} recordings in {ctx.obj['out']}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="memdstate", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 2
    except click.ClickException as exc:
        exc.show()
        return 1
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # noqa: BLE001
        click.echo(f"runtime error: {type(exc).__name__}: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
