"""Command-line entry points.

Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .exceptions import ConfigurationError, ParseError, StetError

COMMANDS = ("pretrain", "train", "eval", "noise-bench", "export-embeddings", "gen-data", "grad-check")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stet",
        description="Train and evaluate the short-term enhanced transformer on sEMG windows.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML run config")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        metavar="KEY=VALUE",
        help="override a config entry (dotted path), repeatable",
    )
    common.add_argument("--out", type=Path, default=None, help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("pretrain", parents=[common], help="masked-reconstruction pretraining").add_argument(
        "--resume", type=Path, default=None, help="resume from a pretrain checkpoint"
    )
    train = sub.add_parser("train", parents=[common], help="supervised training + evaluation")
    train.add_argument("--init", choices=("scratch", "pretrained"), default="scratch")
    train.add_argument("--pretrain-checkpoint", type=Path, default=None)
    evalp = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on the test split")
    evalp.add_argument("--checkpoint", type=Path, required=True)
    bench = sub.add_parser("noise-bench", parents=[common], help="noise robustness sweep")
    bench.add_argument("--checkpoint", type=Path, required=True)
    export = sub.add_parser("export-embeddings", parents=[common], help="dump decoder embeddings as CSV")
    export.add_argument("--checkpoint", type=Path, required=True)
    export.add_argument("--split", choices=("train", "test"), default="test")
    gen = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset file")
    gen.add_argument("--format", choices=("csv", "raw-f64"), default="raw-f64")
    check = sub.add_parser("grad-check", parents=[common], help="finite-difference gradient audit")
    check.add_argument("--tol", type=float, default=1e-3)
    check.add_argument("--entries", type=int, default=6, help="sampled coordinates per parameter")
    return parser


def _cmd_pretrain(cfg, args):
    from .training import prepare_data, run_pretrain

    bundle = prepare_data(cfg)
    ckpt = run_pretrain(cfg, bundle, out_dir=cfg.out_dir, resume_from=args.resume)
    print(f"pretrain checkpoint: {ckpt}")
    return 0


def _cmd_train(cfg, args):
    from .training import prepare_data, run_finetune, run_pretrain

    bundle = prepare_data(cfg)
    pretrain_ckpt = args.pretrain_checkpoint
    if args.init == "pretrained" and pretrain_ckpt is None:
        pretrain_ckpt = run_pretrain(cfg, bundle, out_dir=cfg.out_dir)
    ckpt, report = run_finetune(
        cfg, bundle, out_dir=cfg.out_dir, init=args.init, pretrain_checkpoint=pretrain_ckpt
    )
    print(f"model checkpoint: {ckpt}")
    if report.overall_accuracy is not None:
        print(f"test accuracy: {report.overall_accuracy:.4f}")
    if report.pcc is not None:
        print(f"test pcc: {report.pcc:.4f}  nrmse: {report.nrmse:.4f}  kappa: {report.kappa:.4f}")
    return 0


def _cmd_eval(cfg, args):
    from .config import build_model_config
    from .metrics import MetricsReport, accuracy, avg_curvature, nrmse, pcc, rmse
    from .model import load_checkpoint
    from .training import predict_angles, predict_classes, prepare_data

    bundle = prepare_data(cfg)
    mcfg = build_model_config(
        cfg, bundle.sensors, bundle.steps, n_classes=bundle.n_classes, n_joints=bundle.n_joints
    )
    params, _, extras = load_checkpoint(args.checkpoint, expected_config=mcfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.task == "classify":
        preds = predict_classes(params, mcfg, bundle.X_test, cfg.training.eval_batch_size)
        acc = accuracy(preds, bundle.y_test, bundle.category_map)
        report = MetricsReport(
            task="classify",
            overall_accuracy=acc["overall"],
            category_accuracy={k: v for k, v in acc.items() if k != "overall"},
            provenance={"checkpoint": str(args.checkpoint), "seed": cfg.seed},
        )
        print(f"test accuracy: {acc['overall']:.4f}")
    else:
        preds = predict_angles(
            params, mcfg, bundle.X_test,
            extras.get("target_mean", 0.0), extras.get("target_std", 1.0),
            cfg.training.eval_batch_size,
        )
        report = MetricsReport(
            task="regress",
            pcc=pcc(bundle.y_test, preds),
            rmse=rmse(bundle.y_test, preds),
            nrmse=nrmse(bundle.y_test, preds),
            kappa=avg_curvature(preds),
            kappa_reference=avg_curvature(bundle.y_test),
            provenance={"checkpoint": str(args.checkpoint), "seed": cfg.seed},
        )
        print(f"test pcc: {report.pcc:.4f}  nrmse: {report.nrmse:.4f}")
    report.validate().save(out_dir / "eval_report.json")
    return 0


def _cmd_noise_bench(cfg, args):
    from .training import prepare_data, run_noise_bench

    bundle = prepare_data(cfg)
    report = run_noise_bench(cfg, args.checkpoint, bundle, out_dir=cfg.out_dir)
    for row in report.noise_table:
        print(
            f"{row['mode']:24s} intensity={row['intensity']:<6g} "
            f"acc={row['accuracy']:.4f} drop={row['drop_rate']:+.4f}"
        )
    return 0


def _cmd_export(cfg, args):
    from .training import export_embeddings, prepare_data

    bundle = prepare_data(cfg)
    paths = export_embeddings(cfg, args.checkpoint, bundle, split=args.split, out_dir=cfg.out_dir)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _cmd_gen_data(cfg, args):
    from .datasets import save_dataset
    from .training import _load_recordings

    recordings = _load_recordings(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = "csv" if args.format == "csv" else "raw"
    path = save_dataset(recordings, out_dir / f"dataset.{suffix}", format=args.format)
    print(f"wrote {len(recordings)} recordings to {path}")
    return 0


def _cmd_grad_check(cfg, args):
    from .training import grad_check_suite

    reports = grad_check_suite(seed=cfg.seed, rel_tol=args.tol, max_entries_per_param=args.entries)
    worst = max(reports.values(), key=lambda r: r.max_rel_discrepancy)
    for name, report in reports.items():
        status = "pass" if report.passed else "FAIL"
        print(f"{name:22s} {status}  max discrepancy {report.max_rel_discrepancy:.3e}")
    print(f"max discrepancy: {worst.max_rel_discrepancy:.3e} (tolerance {args.tol:g})")
    return 0 if all(r.passed for r in reports.values()) else 3


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        cfg = load_config(args.config, args.overrides)
        if args.out is not None:
            cfg.out_dir = str(args.out)
    except (ConfigurationError, ParseError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    handlers = {
        "pretrain": _cmd_pretrain,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "noise-bench": _cmd_noise_bench,
        "export-embeddings": _cmd_export,
        "gen-data": _cmd_gen_data,
        "grad-check": _cmd_grad_check,
    }
    try:
        return handlers[args.command](cfg, args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StetError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
