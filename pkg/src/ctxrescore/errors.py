"""Detection error taxonomy and confidence-share accounting.

Each detection is anchored to the ground truth of highest IoU regardless of
class, then labeled:

* ``correct`` - same class, IoU >= 0.5, and the ground truth is not yet
  claimed by a higher-confidence correct detection (the claim is exclusive);
* ``localization`` - same class with 0.1 <= IoU < 0.5, or same class with
  IoU >= 0.5 whose ground truth was already claimed (a duplicate);
* ``similar_class`` - different class in the same supercategory, IoU >= 0.1;
* ``dissimilar_class`` - different supercategory, IoU >= 0.1;
* ``background`` - everything with IoU < 0.1.

Shares weight each category by the detection confidence it accumulates, so
high-confidence mistakes dominate the breakdown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .boxes import CategoryTable, ImageRecord, iou_matrix

__all__ = ["ERROR_CATEGORIES", "ErrorBreakdown", "classify_detections", "confidence_shares"]

ERROR_CATEGORIES = ("correct", "localization", "similar_class", "dissimilar_class", "background")

_BACKGROUND_IOU = 0.1
_CORRECT_IOU = 0.5


@dataclass
class ErrorBreakdown:
    """Per-category detection counts and accumulated confidence."""

    counts: dict
    confidence: dict

    @property
    def total_confidence(self) -> float:
        return math.fsum(self.confidence.values())

    @property
    def shares(self) -> dict | None:
        """Confidence fraction per category, or ``None`` when nothing is scored."""
        total = self.total_confidence
        if total <= 0.0:
            return None
        return {k: v / total for k, v in self.confidence.items()}

    def non_correct_share(self) -> float | None:
        shares = self.shares
        if shares is None:
            return None
        return math.fsum(v for k, v in shares.items() if k != "correct")


def classify_detections(image: ImageRecord, table: CategoryTable) -> list[str]:
    """Error category per detection, aligned with ``image.dets`` order.

    Detections are processed in descending score order (ties: lower det_id
    first); the anchor is the ground truth of highest IoU across all classes
    (ties: lowest gt index). Only the correct label claims its ground truth.
    """
    dets = image.dets
    gts = image.gts
    ious = iou_matrix([d.box for d in dets], [g.box for g in gts])
    claimed = [False] * len(gts)
    labels = [""] * len(dets)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].det_id))
    for i in order:
        det = dets[i]
        best_j = -1
        best_iou = 0.0
        for j in range(len(gts)):
            if ious[i, j] > best_iou:
                best_j, best_iou = j, ious[i, j]
        if best_j < 0 or best_iou < _BACKGROUND_IOU:
            labels[i] = "background"
            continue
        gt = gts[best_j]
        if det.class_idx == gt.class_idx:
            if best_iou >= _CORRECT_IOU and not claimed[best_j]:
                claimed[best_j] = True
                labels[i] = "correct"
            else:
                labels[i] = "localization"
        elif table.supercategories[det.class_idx] == table.supercategories[gt.class_idx]:
            labels[i] = "similar_class"
        else:
            labels[i] = "dissimilar_class"
    return labels


def confidence_shares(images, table: CategoryTable) -> ErrorBreakdown:
    """Accumulate detection confidence per error category across images."""
    counts = {k: 0 for k in ERROR_CATEGORIES}
    conf = {k: [] for k in ERROR_CATEGORIES}
    for rec in images:
        for det, label in zip(rec.dets, classify_detections(rec, table)):
            counts[label] += 1
            conf[label].append(det.score)
    return ErrorBreakdown(
        counts=counts,
        confidence={k: math.fsum(v) for k, v in conf.items()},
    )
