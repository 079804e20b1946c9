"""Command-line entry points: synth, train, eval, contours.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage or validation
errors. Every command is deterministic given identical inputs and
``--seed``; train and eval write a manifest that, together with the data,
pins the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import cv2
import numpy as np

from . import __version__
from .config import ConfigError, build_train_config, load_config
from .data import export_idrid_layout, load_idrid_split, make_synthetic_dataset
from .evaluator import AGGREGATIONS, aggregate, evaluate
from .morphology import compose_contours, export_contour_pngs
from .patching import partition
from .trainer import fit, load_checkpoint, model_from_checkpoint
from .unet import build_backbone

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def dataset_fingerprint(root: Path) -> str:
    """Content hash over every file under the dataset root (path + bytes)."""
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(root)).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


def write_manifest(out_dir: Path, payload: dict) -> Path:
    payload = dict(payload, tool_version=__version__)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def cmd_train(args: argparse.Namespace) -> int:
    data_root = Path(args.data)
    if not data_root.is_dir():
        print(f"error: data root does not exist: {data_root}", file=sys.stderr)
        return EXIT_USAGE
    try:
        values = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None:
        values["train.seed"] = args.seed
    if args.epochs is not None:
        values["train.epochs"] = args.epochs
    if args.bce_only:
        values["loss.alpha"] = 0.0
        values["loss.beta"] = 0.0
    try:
        config = build_train_config(values)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_idrid_split(data_root, "train")
    if not dataset:
        print(f"error: no training samples under {data_root / 'train'}", file=sys.stderr)
        return EXIT_USAGE
    model = build_backbone(config.backbone, seed=config.seed)
    checkpoint_path = fit(model, dataset, config, out_dir)
    write_manifest(
        out_dir,
        {
            "command": "train",
            "config": {k: values[k] for k in sorted(values)},
            "bce_only": bool(args.bce_only),
            "dataset_fingerprint": dataset_fingerprint(data_root),
            # Paths relative to the output directory, so two runs that
            # differ only in where they write produce identical manifests.
            "artifacts": {
                "checkpoint": checkpoint_path.name,
                "train_log": "train_log.jsonl",
            },
        },
    )
    print(f"trained {config.epochs} epochs on {len(dataset)} samples -> {checkpoint_path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint_path = Path(args.checkpoint)
    if not checkpoint_path.is_file():
        print(f"error: checkpoint does not exist: {checkpoint_path}", file=sys.stderr)
        return EXIT_USAGE
    data_root = Path(args.data)
    if not data_root.is_dir():
        print(f"error: data root does not exist: {data_root}", file=sys.stderr)
        return EXIT_USAGE
    payload = load_checkpoint(checkpoint_path)
    model, train_config = model_from_checkpoint(payload)
    # Evaluate at model resolution: resize/center-crop to the training
    # input size when the run defined one.
    input_size = (
        train_config.augmentation.output_size if train_config.augmentation else None
    )
    samples = load_idrid_split(data_root, args.split)
    if not samples:
        print(f"error: no samples under {data_root / args.split}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    overlay_dir = out_dir / "overlays" if args.overlays else None
    report = evaluate(
        model,
        samples,
        threshold=args.threshold,
        aggregation=args.aggregation,
        input_size=input_size,
        overlay_dir=overlay_dir,
    )
    # Both aggregation modes go into the JSON report; the flag only picks
    # which one headlines the table.
    payload = {
        "threshold": args.threshold,
        "primary_aggregation": args.aggregation,
        "aggregates": {},
        "per_image": [
            {k: v for k, v in vars(m).items()} for m in report.per_image
        ],
    }
    for mode in AGGREGATIONS:
        agg = aggregate(report.per_image, mode, args.threshold)
        payload["aggregates"][mode] = {
            "precision": agg.precision,
            "recall": agg.recall,
            "f1": agg.f1,
            "iou": agg.iou,
        }
    (out_dir / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    (out_dir / "report.txt").write_text(report.to_table() + "\n")
    write_manifest(
        out_dir,
        {
            "command": "eval",
            "checkpoint": str(checkpoint_path),
            "threshold": args.threshold,
            "aggregation": args.aggregation,
            "dataset_fingerprint": dataset_fingerprint(data_root),
            "artifacts": {"report": "report.json"},
        },
    )
    print(report.to_table())
    return EXIT_OK


def cmd_contours(args: argparse.Namespace) -> int:
    mask_path = Path(args.mask)
    if not mask_path.is_file():
        print(f"error: mask file does not exist: {mask_path}", file=sys.stderr)
        return EXIT_USAGE
    raw = cv2.imread(str(mask_path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        print(f"error: failed to read mask file: {mask_path}", file=sys.stderr)
        return EXIT_USAGE
    if raw.ndim == 3:
        raw = raw.max(axis=2)
    values = np.unique(raw)
    if not np.isin(values, (0, 1)).all() and not np.isin(values, (0, 255)).all():
        print(f"warning: mask {mask_path} is not binary; thresholding at 0", file=sys.stderr)
    mask = (raw > 0).astype(np.uint8)
    h, w = mask.shape
    if h % args.grid_n or w % args.grid_n:
        print(
            f"error: mask dimensions {h}x{w} are not divisible by grid side n={args.grid_n}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    grid = partition(mask, args.grid_n)
    pair = compose_contours(grid, mask)
    assert (pair.inner & ~mask).sum() == 0, "inner contour escapes the mask"
    assert (pair.outer & mask).sum() == 0, "outer contour overlaps the mask"
    inner_path, outer_path = export_contour_pngs(pair, args.out)
    print(f"wrote {inner_path} and {outer_path}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    samples = make_synthetic_dataset(args.count, args.size, args.seed)
    n_train = max(1, round(args.count * (1.0 - args.test_fraction)))
    out_root = Path(args.out)
    export_idrid_layout(samples[:n_train], out_root, "train")
    if n_train < len(samples):
        export_idrid_layout(samples[n_train:], out_root, "test")
    print(
        f"wrote {n_train} train / {len(samples) - n_train} test synthetic samples under {out_root}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchcl",
        description="Train and evaluate lesion segmentation with patch-wise contrastive losses.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model on an images/masks directory tree")
    p_train.add_argument("--config", type=str, default=None, help="key=value config file")
    p_train.add_argument("--data", type=str, required=True, help="dataset root (contains train/)")
    p_train.add_argument("--out", type=str, required=True, help="output directory")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--epochs", type=int, default=None, help="override train.epochs")
    p_train.add_argument(
        "--bce-only", action="store_true", help="disable both contrastive terms (alpha=beta=0)"
    )
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", type=str, required=True)
    p_eval.add_argument("--data", type=str, required=True)
    p_eval.add_argument("--out", type=str, required=True)
    p_eval.add_argument("--split", type=str, default="test")
    p_eval.add_argument("--threshold", type=float, default=0.5)
    p_eval.add_argument(
        "--aggregation", choices=("per-image-mean", "dataset-micro"), default="per-image-mean"
    )
    p_eval.add_argument("--overlays", action="store_true", help="write GT/prediction overlays")
    p_eval.set_defaults(func=cmd_eval)

    p_cont = sub.add_parser("contours", help="export inner/outer contour masks for a GT mask")
    p_cont.add_argument("--mask", type=str, required=True)
    p_cont.add_argument("--out", type=str, required=True)
    p_cont.add_argument("--grid-n", type=int, default=16)
    p_cont.set_defaults(func=cmd_contours)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset in the loadable layout")
    p_synth.add_argument("--out", type=str, required=True)
    p_synth.add_argument("--count", type=int, default=8)
    p_synth.add_argument("--size", type=int, default=128)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--test-fraction", type=float, default=0.2)
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
