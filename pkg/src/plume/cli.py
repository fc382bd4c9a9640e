"""Command-line entry points: train, eval, ablate, synth.

Configuration precedence for every TrainConfig key: command-line flag, then
``PLUME_<KEY>`` environment variable, then config-file entry, then default.
Config files are plain ``key = value`` lines with ``#`` comments; unknown keys
are rejected.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import classifier as clf_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .data import (
    CovarianceSpec,
    FeatureDataset,
    one_class_split,
    read_csv_features,
    read_features,
    synth_blobs,
    write_features,
)
from .errors import ConfigError, PlumeError
from .losses import GUIDANCE_MODES
from .metrics import roc_auc
from .perturbator import Strategy
from .training import run_suite

ENV_PREFIX = "PLUME_"

GUIDANCE_LABELS = {"none": "-", "mean": "✓ (Mean)", "full": "✓"}

PATH_KEYS = ("train_features", "val_features", "out_dir", "normal_class")


def parse_config_file(path):
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def resolve_config(args):
    """Merge defaults, config file, environment, and flags into a TrainConfig
    plus the path-valued settings."""
    field_names = [f.name for f in dataclasses.fields(TrainConfig)]
    merged = {}
    paths = {}
    if args.config:
        file_values = parse_config_file(args.config)
        for key, value in file_values.items():
            if key in PATH_KEYS:
                paths[key] = value
            elif key in field_names:
                merged[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
    for key in field_names + list(PATH_KEYS):
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            (paths if key in PATH_KEYS else merged)[key] = env
    for key in field_names:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    for key in PATH_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            paths[key] = flag
    return TrainConfig.from_dict(merged), paths


def add_config_flags(parser):
    parser.add_argument("--config", help="key = value config file")
    for f in dataclasses.fields(TrainConfig):
        kind = str if f.name in ("strategy", "guidance") else (
            int if isinstance(f.default, int) else float
        )
        parser.add_argument(f"--{f.name}", type=kind, default=None)
    parser.add_argument("--train_features", default=None)
    parser.add_argument("--val_features", default=None)
    parser.add_argument("--out_dir", default=None)
    parser.add_argument(
        "--normal_class",
        default=None,
        help="normal class label, or comma-separated set of labels",
    )


def load_dataset(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"feature file not found: {path}")
    if path.suffix == ".csv":
        return read_csv_features(path)
    return read_features(path)


def parse_classes(spec):
    if spec is None:
        return {0}
    return {int(c) for c in str(spec).split(",")}


def build_split(paths):
    for key in ("train_features", "val_features", "out_dir"):
        if key not in paths:
            raise ConfigError(f"missing required setting {key!r}")
    train_ds = load_dataset(paths["train_features"])
    val_ds = load_dataset(paths["val_features"])
    return one_class_split(train_ds, val_ds, parse_classes(paths.get("normal_class")))


def format_summary_row(name, mean, std, runs):
    return f"{name:<28s} AUC {100 * mean:6.2f} ± {100 * std:.2f}  ({runs} runs)"


def cmd_train(args):
    cfg, paths = resolve_config(args)
    split = build_split(paths)
    out_dir = Path(paths["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    metrics_path = out_dir / "metrics.jsonl"
    with open(metrics_path, "w") as metrics_fh:
        def sink(entry):
            metrics_fh.write(json.dumps(entry, sort_keys=True) + "\n")

        reports, mean, std = run_suite(
            split.train_features, split.val_features, split.val_is_normal, cfg, sink=sink
        )

    for report in reports:
        ckpt = out_dir / f"run{report.run_id}.plmc"
        save_checkpoint(
            ckpt, report.best_model, cfg, include_perturbator=args.save_perturbator
        )
        if args.dump_embeddings:
            model = report.best_model
            z, _ = clf_mod.embed(split.val_features, model.classifier, train=False)
            write_features(
                out_dir / f"run{report.run_id}_embeddings.plmf",
                FeatureDataset(z, split.val_is_normal.astype(np.int32)),
            )

    summary = {
        "mean_best_auc": mean,
        "std_best_auc": std,
        "runs": [
            {"run_id": r.run_id, "best_auc": r.best_auc, "best_epoch": r.best_epoch}
            for r in reports
        ],
        "config": cfg.to_dict(),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(format_summary_row(f"{cfg.strategy}/{cfg.guidance}", mean, std, cfg.runs))
    return 0


def cmd_eval(args):
    model, cfg, meta = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.features)
    is_normal = np.isin(ds.labels, list(parse_classes(args.normal_class)))
    scores = clf_mod.score_batch(ds.features, model.classifier)
    auc = roc_auc(scores, is_normal)
    if args.scores_out:
        with open(args.scores_out, "w") as fh:
            fh.write("row_id,score,is_normal\n")
            for i, (s, flag) in enumerate(zip(scores, is_normal)):
                fh.write(f"{i},{float(s)!r},{int(flag)}\n")
    print(f"AUC {100 * auc:.2f}")
    return 0


def cmd_ablate(args):
    cfg, paths = resolve_config(args)
    split = build_split(paths)
    out_dir = Path(paths["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    strategies = (
        [s.strip() for s in args.strategies.split(",")]
        if args.strategies
        else [s.value for s in Strategy]
    )
    guidances = (
        [g.strip() for g in args.guidances.split(",")]
        if args.guidances
        else list(GUIDANCE_MODES)
    )
    rows = []
    for strategy in strategies:
        for guidance in guidances:
            cell_cfg = TrainConfig.from_dict(
                {**cfg.to_dict(), "strategy": strategy, "guidance": guidance}
            )
            _, mean, std = run_suite(
                split.train_features, split.val_features, split.val_is_normal, cell_cfg
            )
            row = {
                "perturbation": strategy,
                "guidance": guidance,
                "guidance_label": GUIDANCE_LABELS[guidance],
                "mean_auc": mean,
                "std_auc": std,
                "runs": cell_cfg.runs,
            }
            rows.append(row)
            print(
                format_summary_row(
                    f"{strategy} {GUIDANCE_LABELS[guidance]}", mean, std, cell_cfg.runs
                )
            )
    report = {"rows": rows, "config": cfg.to_dict()}
    (out_dir / "ablation.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_synth(args):
    ds = synth_blobs(
        dim=args.dim,
        n_normal=args.n_normal,
        n_anomaly=args.n_anomaly,
        separation=args.separation,
        seed=args.seed,
        cov_normal=CovarianceSpec(args.scale, args.anisotropy),
        cov_anomaly=CovarianceSpec(args.scale, args.anisotropy),
    )
    write_features(args.out, ds, dtype=args.dtype)
    print(f"wrote {ds.count} x {ds.dim} features to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plume", description="One-class anomaly detection trainer"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train on feature files")
    add_config_flags(p_train)
    p_train.add_argument("--save-perturbator", action="store_true")
    p_train.add_argument("--dump-embeddings", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="score a feature file with a checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("features")
    p_eval.add_argument("--normal_class", default=None)
    p_eval.add_argument("--scores-out", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="perturbation x guidance grid")
    add_config_flags(p_ablate)
    p_ablate.add_argument("--strategies", default=None, help="comma list")
    p_ablate.add_argument("--guidances", default=None, help="comma list")
    p_ablate.set_defaults(func=cmd_ablate)

    p_synth = sub.add_parser("synth", help="generate synthetic blob features")
    p_synth.add_argument("--dim", type=int, default=32)
    p_synth.add_argument("--n-normal", type=int, default=1000)
    p_synth.add_argument("--n-anomaly", type=int, default=0)
    p_synth.add_argument("--separation", type=float, default=6.0)
    p_synth.add_argument("--scale", type=float, default=1.0)
    p_synth.add_argument("--anisotropy", type=float, default=1.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--dtype", choices=("f32", "f64"), default="f64")
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PlumeError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
