"""Command-line entry point exposing every operation as a subcommand.

Subcommands: ``eval``, ``target``, ``train``, ``rescore``, ``analyze``,
``cooccur``, ``rank``, ``synth``. Reports are written as human-readable text
on stdout plus plot-ready CSV files. Every subcommand is deterministic given
``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import io
from .checkpoint import load_checkpoint, save_checkpoint
from .cooccurrence import cooccurrence_csv_rows, cooccurrence_matrix
from .errors import ERROR_CATEGORIES, confidence_shares
from .evaluation import EvalParams, evaluate
from .matching import TargetConfig, apply_targets
from .network import ModelConfig
from .ranking import rank_images
from .synth import SynthParams, generate_dataset
from .training import TrainConfig, history_csv_rows, rescore_dataset, train_loop

__all__ = ["build_parser", "run", "main"]


def _write_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        csv.writer(f).writerows(rows)


def _load_dataset(ann_path, det_path=None):
    table, images, _ = io.load_annotations(ann_path)
    if det_path is not None:
        io.load_detections(det_path, table, images)
    return table, images


def _report_csv_rows(report, table):
    header = ["class"] + [f"t={t:.2f}" for t in report.thresholds]
    rows = [header]
    for c in range(len(table.names)):
        row = [table.names[c]]
        for ti in range(len(report.thresholds)):
            v = report.per_class_threshold[c, ti]
            row.append("" if np.isnan(v) else repr(float(v)))
        rows.append(row)
    return rows


def _print_report(report, out, quiet):
    if not quiet:
        for line in report.summary_lines():
            print(line, file=out)


def _cmd_eval(args, out):
    table, images = _load_dataset(args.ann, args.det)
    report = evaluate(images, EvalParams(), num_classes=table.num_classes)
    _print_report(report, out, args.quiet)
    if args.csv:
        _write_csv(args.csv, _report_csv_rows(report, table))
    return 0


def _cmd_target(args, out):
    table, images = _load_dataset(args.ann, args.det)
    config = TargetConfig(matching=args.matching, target=args.target)
    rescored = apply_targets(images, config)
    io.save_detections(args.out, table, rescored)
    baseline = evaluate(images, EvalParams(), num_classes=table.num_classes)
    report = evaluate(rescored, EvalParams(), num_classes=table.num_classes)
    if not args.quiet:
        print(f"baseline AP {'undefined' if baseline.ap is None else f'{baseline.ap:.6f}'}", file=out)
        print(f"target AP   {'undefined' if report.ap is None else f'{report.ap:.6f}'}", file=out)
    if args.csv:
        _write_csv(args.csv, _report_csv_rows(report, table))
    return 0


def _cmd_train(args, out):
    table, train_images = _load_dataset(args.ann, args.det)
    val_table, val_images = _load_dataset(args.val_ann, args.val_det)
    if val_table.num_classes != table.num_classes:
        raise ValueError(
            f"training and validation class counts differ "
            f"({table.num_classes} vs {val_table.num_classes})"
        )
    model_config = ModelConfig(
        hidden_size=args.hidden,
        num_layers=args.layers,
        encoder=args.encoder,
        num_classes=table.num_classes,
        seed=args.seed,
    )
    train_config = TrainConfig(
        batch_size=args.batch,
        learning_rate=args.lr,
        shuffle_prob=args.shuffle_prob,
        patience=args.patience,
        early_stop=args.early_stop,
        max_epochs=args.max_epochs,
        seed=args.seed,
        matching=args.matching,
        target=args.target,
    )
    result = train_loop(train_images, val_images, model_config, train_config)
    save_checkpoint(result.params, result.config, args.out)
    if args.history:
        _write_csv(args.history, history_csv_rows(result.history))
    if not args.quiet:
        status = "diverged" if result.diverged else "done"
        print(
            f"{status}: {len(result.history)} epochs, best epoch {result.best_epoch} "
            f"with val AP {result.best_val_ap:.6f}",
            file=out,
        )
        print(f"checkpoint written to {args.out}", file=out)
    return 0


def _cmd_rescore(args, out):
    table, images = _load_dataset(args.ann, args.det)
    params, config = load_checkpoint(args.ckpt)
    if config.num_classes != table.num_classes:
        raise ValueError(
            f"checkpoint was trained for {config.num_classes} classes, "
            f"dataset has {table.num_classes}"
        )
    rescored = rescore_dataset(images, params, config)
    io.save_detections(args.out, table, rescored)
    report = evaluate(rescored, EvalParams(), num_classes=table.num_classes)
    _print_report(report, out, args.quiet)
    return 0


def _cmd_analyze(args, out):
    table, images = _load_dataset(args.ann, args.det)
    breakdown = confidence_shares(images, table)
    shares = breakdown.shares
    rows = [["category", "count", "confidence", "share"]]
    for cat in ERROR_CATEGORIES:
        share = "" if shares is None else repr(shares[cat])
        rows.append([cat, str(breakdown.counts[cat]), repr(breakdown.confidence[cat]), share])
    if args.csv:
        _write_csv(args.csv, rows)
    if not args.quiet:
        for row in rows:
            print(",".join(row), file=out)
    return 0


def _cmd_cooccur(args, out):
    table, images, _ = io.load_annotations(args.ann)
    matrix = cooccurrence_matrix(images, num_classes=table.num_classes)
    rows = cooccurrence_csv_rows(matrix, table)
    if args.csv:
        _write_csv(args.csv, rows)
    if not args.quiet:
        for row in rows:
            print(",".join(row), file=out)
    return 0


def _cmd_rank(args, out):
    table, images = _load_dataset(args.ann, args.before)
    _, images_after = _load_dataset(args.ann, args.after)
    entries = rank_images(
        images, images_after, top=args.top, max_dets=args.max_dets, min_score=args.min_score
    )
    rows = [["image_id", "distance", "n_dets", "before", "after"]]
    for e in entries:
        rows.append(
            [
                str(e.image_id),
                repr(e.distance),
                str(len(e.before)),
                ";".join(repr(v) for v in e.before.tolist()),
                ";".join(repr(v) for v in e.after.tolist()),
            ]
        )
    if args.csv:
        _write_csv(args.csv, rows)
    if not args.quiet:
        for e in entries:
            print(f"{e.image_id}\t{e.distance:.6f}", file=out)
    return 0


def _cmd_synth(args, out):
    params = SynthParams(
        n_images=args.images,
        n_classes=args.classes,
        gts_per_image=(args.min_gts, args.max_gts),
        duplicates_per_gt=(args.min_dup, args.max_dup),
        jitter=args.jitter,
        confusion_prob=args.confusion,
        background_fp_rate=args.fp_rate,
        score_iou_weight=args.score_iou_weight,
        score_noise=args.score_noise,
        seed=args.seed,
    )
    table, images = generate_dataset(params)
    io.save_annotations(args.out_ann, table, images)
    io.save_detections(args.out_det, table, images)
    if not args.quiet:
        n_dets = sum(len(r.dets) for r in images)
        n_gts = sum(len(r.gts) for r in images)
        print(
            f"wrote {len(images)} images ({n_gts} ground truths, {n_dets} detections) "
            f"to {args.out_ann} / {args.out_det}",
            file=out,
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxrescore",
        description="Detection rescoring toolkit: AP evaluation, AP-maximizing targets, "
        "learned contextual rescoring.",
    )
    parser.add_argument("--seed", type=int, default=0, help="PRNG seed for seeded subcommands")
    parser.add_argument("--threads", type=int, default=1, help="parallelism cap (reserved; execution is single-threaded)")
    parser.add_argument("--quiet", action="store_true", help="suppress stdout reports")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="COCO-style AP report for a detection file")
    p.add_argument("--ann", required=True, help="annotation file")
    p.add_argument("--det", required=True, help="detection results file")
    p.add_argument("--csv", help="write per-class per-threshold AP as CSV")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("target", help="rescore detections to their AP-maximizing targets")
    p.add_argument("--ann", required=True)
    p.add_argument("--det", required=True)
    p.add_argument("--matching", choices=["localization", "confidence"], default="localization")
    p.add_argument("--target", choices=["iou", "binary"], default="iou")
    p.add_argument("--out", required=True, help="output detection file with target scores")
    p.add_argument("--csv", help="write the target AP report as CSV")
    p.set_defaults(func=_cmd_target)

    p = sub.add_parser("train", help="train the rescoring model")
    p.add_argument("--ann", required=True)
    p.add_argument("--det", required=True)
    p.add_argument("--val-ann", required=True)
    p.add_argument("--val-det", required=True)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--encoder", choices=["gru", "linear"], default="gru")
    p.add_argument("--target", choices=["iou", "binary"], default="iou")
    p.add_argument("--matching", choices=["localization", "confidence"], default="localization")
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=0.003)
    p.add_argument("--shuffle-prob", type=float, default=0.75)
    p.add_argument("--patience", type=int, default=4)
    p.add_argument("--early-stop", type=int, default=20)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="write per-epoch loss/AP/lr history as CSV")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("rescore", help="apply a trained checkpoint to a detection file")
    p.add_argument("--ann", required=True)
    p.add_argument("--det", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rescore)

    p = sub.add_parser("analyze", help="confidence share per detection error category")
    p.add_argument("--ann", required=True)
    p.add_argument("--det", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("cooccur", help="class co-occurrence matrix from annotations")
    p.add_argument("--ann", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=_cmd_cooccur)

    p = sub.add_parser("rank", help="rank images by confidence change between two detection files")
    p.add_argument("--ann", required=True)
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--top", type=int)
    p.add_argument("--max-dets", type=int)
    p.add_argument("--min-score", type=float)
    p.add_argument("--csv")
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("synth", help="generate a synthetic annotation/detection pair")
    p.add_argument("--out-ann", required=True)
    p.add_argument("--out-det", required=True)
    p.add_argument("--images", type=int, default=8)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--min-gts", type=int, default=1)
    p.add_argument("--max-gts", type=int, default=3)
    p.add_argument("--min-dup", type=int, default=0)
    p.add_argument("--max-dup", type=int, default=2)
    p.add_argument("--jitter", type=float, default=0.25)
    p.add_argument("--confusion", type=float, default=0.1)
    p.add_argument("--fp-rate", type=float, default=1.0)
    p.add_argument("--score-iou-weight", type=float, default=0.5)
    p.add_argument("--score-noise", type=float, default=0.15)
    p.set_defaults(func=_cmd_synth)
    return parser


def run(argv=None) -> int:
    """Execute a subcommand; returns the process exit status.

    Usage errors exit with 2 (argparse convention); runtime failures print a
    single machine-readable line to stderr and return 1.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, sys.stdout)
    except Exception as e:  # noqa: BLE001 - single reporting point for the CLI
        print(f"error\t{type(e).__name__}\t{e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
