"""Thresholded predictions and pixel-wise precision/recall/F1/IoU reports.

Counts are pixel-level: TP/FP/FN between the binarized prediction and the
ground truth. Empty-mask conventions: a metric whose denominator vanishes
is 1.0 when both masks are empty (nothing to find, nothing found) and 0.0
when exactly one is empty. Reports aggregate either as the mean of
per-image metrics or from dataset-wide micro counts.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import cv2
import numpy as np
import torch

from .data import Sample, resize_and_crop

AGGREGATIONS = ("per-image-mean", "dataset-micro")


@dataclass
class ImageMetrics:
    """Confusion counts and derived metrics for one image."""

    id: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    iou: float


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    iou: float
    threshold: float
    aggregation: str
    per_image: list[ImageMetrics]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        lines = [
            f"{'id':<24} {'precision':>10} {'recall':>10} {'f1':>10} {'iou':>10}",
            "-" * 68,
        ]
        for m in self.per_image:
            lines.append(
                f"{m.id:<24} {m.precision:>10.4f} {m.recall:>10.4f} {m.f1:>10.4f} {m.iou:>10.4f}"
            )
        lines.append("-" * 68)
        lines.append(
            f"{self.aggregation:<24} {self.precision:>10.4f} {self.recall:>10.4f} "
            f"{self.f1:>10.4f} {self.iou:>10.4f}"
        )
        return "\n".join(lines)


def binarize(probabilities: np.ndarray, threshold: float) -> np.ndarray:
    """1 where p > threshold (strict), else 0."""
    return (np.asarray(probabilities) > threshold).astype(np.uint8)


def metrics_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float, float]:
    """(precision, recall, f1, iou) with empty-denominator conventions."""
    if tp + fp == 0:
        precision = 1.0 if fn == 0 else 0.0
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 1.0 if fp == 0 else 0.0
    else:
        recall = tp / (tp + fn)
    if tp + fp + fn == 0:
        f1 = 1.0
        iou = 1.0
    else:
        f1 = 2 * tp / (2 * tp + fp + fn)
        iou = tp / (tp + fp + fn)
    return precision, recall, f1, iou


def compute_metrics(pred: np.ndarray, gt: np.ndarray, image_id: str = "") -> ImageMetrics:
    """Pixel-wise confusion counts and metrics for one mask pair."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(
            f"prediction shape {pred.shape} does not match ground truth shape {gt.shape}"
        )
    p = pred.astype(bool)
    g = gt.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    precision, recall, f1, iou = metrics_from_counts(tp, fp, fn)
    return ImageMetrics(
        id=image_id, tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1, iou=iou
    )


def aggregate(
    entries: list[ImageMetrics], aggregation: str, threshold: float
) -> MetricsReport:
    """Fold per-image metrics into one report."""
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {aggregation!r}")
    if not entries:
        raise ValueError("cannot aggregate an empty list of image metrics")
    if aggregation == "per-image-mean":
        precision = float(np.mean([m.precision for m in entries]))
        recall = float(np.mean([m.recall for m in entries]))
        f1 = float(np.mean([m.f1 for m in entries]))
        iou = float(np.mean([m.iou for m in entries]))
    else:
        tp = sum(m.tp for m in entries)
        fp = sum(m.fp for m in entries)
        fn = sum(m.fn for m in entries)
        precision, recall, f1, iou = metrics_from_counts(tp, fp, fn)
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        iou=iou,
        threshold=threshold,
        aggregation=aggregation,
        per_image=entries,
    )


def write_overlay(path: str | Path, gt: np.ndarray, pred: np.ndarray) -> None:
    """PNG with GT in the red channel and the prediction in green."""
    h, w = gt.shape
    canvas = np.zeros((h, w, 3), dtype=np.uint8)
    canvas[:, :, 0] = gt.astype(np.uint8) * 255
    canvas[:, :, 1] = pred.astype(np.uint8) * 255
    cv2.imwrite(str(path), canvas[:, :, ::-1])  # RGB -> BGR for disk


def predict_probabilities(model, sample: Sample) -> np.ndarray:
    """Sigmoid probability map for one sample (eval mode, no grad)."""
    model.eval()
    with torch.no_grad():
        x = torch.as_tensor(
            sample.image.transpose(2, 0, 1)[None], dtype=torch.float32
        ).contiguous()
        _, logits = model(x)
        return torch.sigmoid(logits)[0, 0].numpy()


def evaluate(
    model,
    samples: list[Sample],
    threshold: float = 0.5,
    aggregation: str = "per-image-mean",
    input_size: int | None = None,
    overlay_dir: str | Path | None = None,
) -> MetricsReport:
    """Forward every sample (resize/center-crop only), binarize, aggregate.

    With ``overlay_dir`` set, writes one GT-vs-prediction overlay PNG per
    image.
    """
    if not samples:
        raise ValueError("samples must be nonempty")
    if overlay_dir is not None:
        overlay_dir = Path(overlay_dir)
        overlay_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for sample in samples:
        prepared = (
            resize_and_crop(sample, input_size) if input_size is not None else sample
        )
        probs = predict_probabilities(model, prepared)
        pred = binarize(probs, threshold)
        entries.append(compute_metrics(pred, prepared.mask, prepared.id))
        if overlay_dir is not None:
            write_overlay(overlay_dir / f"{prepared.id}.png", prepared.mask, pred)
    return aggregate(entries, aggregation, threshold)
