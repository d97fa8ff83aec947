"""Pixel-level evaluation of proposals against ground-truth masks.

Precision is correct predicted pixels over predicted pixels; recall is
correct predicted pixels over ground-truth pixels, per class per image.
Cells where a class has no prediction (for precision) or no ground truth
(for recall) are undefined and skipped, not counted as zero. Aggregates
average per class over images, then over classes, background excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import SoftmaxModel, _softmax, _with_bias
from .errors import ValidationError
from .geometry import Polygon, polygon_pixel_mask
from .store import BACKGROUND


@dataclass
class ClassMask:
    """Binary pixel membership of one class on one image."""

    class_id: str
    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.shape != (self.height, self.width):
            raise ValidationError(f"mask shape {b.shape} != {(self.height, self.width)}")
        self.bits = b

    @property
    def pixel_count(self) -> int:
        return int(self.bits.sum())


def rasterize_hull(polygon: Polygon, width: int, height: int, class_id: str = "") -> ClassMask:
    """Pixels whose centers fall inside or on the polygon (exact arithmetic)."""
    return ClassMask(class_id=class_id, width=width, height=height,
                     bits=polygon_pixel_mask(polygon, width, height))


def pixel_precision_recall(predicted: ClassMask, truth: ClassMask) -> tuple[float | None, float | None]:
    """(precision, recall); None marks an undefined side (no P / no T)."""
    if (predicted.width, predicted.height) != (truth.width, truth.height):
        raise ValidationError("mask dimensions differ")
    p = predicted.pixel_count
    t = truth.pixel_count
    correct = int((predicted.bits & truth.bits).sum())
    assert correct <= p and correct <= t
    precision = correct / p if p else None
    recall = correct / t if t else None
    return precision, recall


@dataclass
class EvalCell:
    """Counts and ratios for one (image, class) pair."""

    image_id: str
    class_id: str
    predicted_pixels: int
    truth_pixels: int
    correct_pixels: int
    precision: float | None
    recall: float | None

    def to_json(self) -> dict:
        return {"image_id": self.image_id, "class_id": self.class_id,
                "predicted_pixels": self.predicted_pixels, "truth_pixels": self.truth_pixels,
                "correct_pixels": self.correct_pixels, "precision": self.precision,
                "recall": self.recall}


def make_cell(image_id: str, predicted: ClassMask, truth: ClassMask) -> EvalCell:
    precision, recall = pixel_precision_recall(predicted, truth)
    return EvalCell(image_id=image_id, class_id=truth.class_id or predicted.class_id,
                    predicted_pixels=predicted.pixel_count, truth_pixels=truth.pixel_count,
                    correct_pixels=int((predicted.bits & truth.bits).sum()),
                    precision=precision, recall=recall)


def aggregate(cells: list[EvalCell]) -> tuple[float, float]:
    """(mAP, mAR): per-class means over defined cells, then over classes."""
    per_class_p: dict[str, list[float]] = {}
    per_class_r: dict[str, list[float]] = {}
    for cell in cells:
        if cell.class_id == BACKGROUND:
            continue
        if cell.precision is not None:
            per_class_p.setdefault(cell.class_id, []).append(cell.precision)
        if cell.recall is not None:
            per_class_r.setdefault(cell.class_id, []).append(cell.recall)
    if not per_class_p and not per_class_r:
        raise ValidationError("no defined precision or recall cells to aggregate")
    map_ = float(np.mean([np.mean(v) for v in per_class_p.values()])) if per_class_p else float("nan")
    mar = float(np.mean([np.mean(v) for v in per_class_r.values()])) if per_class_r else float("nan")
    return map_, mar


@dataclass
class ClassifierMetrics:
    per_class_precision: dict[str, float | None]
    overall_accuracy: float
    mean_per_class_precision: float

    def to_json(self) -> dict:
        return {"per_class_precision": self.per_class_precision,
                "overall_accuracy": self.overall_accuracy,
                "mean_per_class_precision": self.mean_per_class_precision}


def classifier_metrics_from_features(model: SoftmaxModel, x: np.ndarray,
                                     y: np.ndarray) -> ClassifierMetrics:
    """Patch-level metrics on labeled features.

    Per-class precision is top-1 correctness among patches predicted as the
    class; classes never predicted have undefined precision and are skipped
    in the mean. Overall accuracy is reported alongside because the mean
    per-class precision alone can hide a trivial predictor.
    """
    if len(y) == 0:
        raise ValidationError("empty validation set")
    pred = np.argmax(_softmax(_with_bias(x) @ model.weights.T), axis=1)
    per_class: dict[str, float | None] = {}
    defined = []
    for k, name in enumerate(model.class_roster):
        hits = pred == k
        if hits.any():
            value = float(np.mean(y[hits] == k))
            per_class[name] = value
            defined.append(value)
        else:
            per_class[name] = None
    return ClassifierMetrics(per_class_precision=per_class,
                             overall_accuracy=float(np.mean(pred == y)),
                             mean_per_class_precision=float(np.mean(defined)))


def classifier_metrics(model: SoftmaxModel, patches, images) -> ClassifierMetrics:
    """Same metrics computed from provenance patches (materialized lazily)."""
    from .classifier import featurize_patches

    x = featurize_patches(patches, images)
    index = {name: i for i, name in enumerate(model.class_roster)}
    y = np.array([index[p.label] for p in patches], dtype=np.int64)
    return classifier_metrics_from_features(model, x, y)


@dataclass
class EvalReport:
    """Everything the evaluation produces, serializable in one piece."""

    cells: list[EvalCell]
    map: float
    mar: float
    per_class_precision: dict[str, float]
    per_class_recall: dict[str, float]
    classifier: ClassifierMetrics | None = None
    method: str = "texture-softmax"

    def to_json(self) -> dict:
        return {"method": self.method,
                "map": self.map, "mar": self.mar,
                "per_class_precision": self.per_class_precision,
                "per_class_recall": self.per_class_recall,
                "classifier": self.classifier.to_json() if self.classifier else None,
                "cells": [c.to_json() for c in self.cells]}

    def summary(self) -> dict:
        return {"method": self.method, "map": round(self.map, 6), "mar": round(self.mar, 6),
                "classification_metric": (round(self.classifier.mean_per_class_precision, 6)
                                          if self.classifier else None),
                "overall_accuracy": (round(self.classifier.overall_accuracy, 6)
                                     if self.classifier else None)}


def build_report(cells: list[EvalCell], classifier: ClassifierMetrics | None = None,
                 method: str = "texture-softmax") -> EvalReport:
    map_, mar = aggregate(cells)
    per_class_p: dict[str, list[float]] = {}
    per_class_r: dict[str, list[float]] = {}
    for cell in cells:
        if cell.class_id == BACKGROUND:
            continue
        if cell.precision is not None:
            per_class_p.setdefault(cell.class_id, []).append(cell.precision)
        if cell.recall is not None:
            per_class_r.setdefault(cell.class_id, []).append(cell.recall)
    return EvalReport(
        cells=cells, map=map_, mar=mar,
        per_class_precision={c: float(np.mean(v)) for c, v in sorted(per_class_p.items())},
        per_class_recall={c: float(np.mean(v)) for c, v in sorted(per_class_r.items())},
        classifier=classifier, method=method)


def summary_table(report: EvalReport) -> str:
    """Plain-text summary: method, segmentation mAP/mAR, classification metric."""
    rows = [("Method", "mAP", "mAR", "Cls-Prec", "Accuracy")]
    cls_prec = f"{report.classifier.mean_per_class_precision:.2f}" if report.classifier else "-"
    acc = f"{report.classifier.overall_accuracy:.2f}" if report.classifier else "-"
    rows.append((report.method, f"{report.map:.2f}", f"{report.mar:.2f}", cls_prec, acc))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
             for row in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)
