"""AP-maximizing rescoring targets from ground truth.

Two matching strategies pair detections with same-class ground truths:

* ``localization`` sweeps IoU levels from 0.95 down to 0.5 and, at each
  level, lets every still-unmatched ground truth (in annotation order) claim
  the unmatched detection of highest IoU at or above the level. Better
  localized detections win even against higher-confidence ones.
* ``confidence`` walks detections in descending score order and matches each
  to the unmatched same-class ground truth of highest IoU, subject to an IoU
  floor of 0.5 (the lowest evaluation threshold).

The target confidence is the IoU with the matched ground truth (``iou``
mode) or a matched indicator (``binary`` mode); unmatched detections get 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import ImageRecord, iou_matrix
from .evaluation import ApReport, EvalParams, evaluate

__all__ = [
    "MATCHING_MODES",
    "TARGET_MODES",
    "Matching",
    "TargetConfig",
    "greedy_match_by_overlap",
    "greedy_match_by_confidence",
    "match_image",
    "assign_targets",
    "apply_targets",
    "target_ap_report",
]

MATCHING_MODES = ("localization", "confidence")
TARGET_MODES = ("iou", "binary")

# IoU levels swept by the localization-first matcher, highest first.
OVERLAP_LEVELS = tuple(k / 100.0 for k in range(95, 45, -5))

# Minimum IoU for the confidence-first matcher to accept a pair.
CONFIDENCE_MATCH_FLOOR = 0.5


@dataclass(frozen=True)
class Matching:
    """Pairs of (det_id, gt_id) within one image; each id appears at most once."""

    pairs: tuple

    @property
    def matched_dets(self) -> frozenset:
        return frozenset(d for d, _ in self.pairs)

    @property
    def matched_gts(self) -> frozenset:
        return frozenset(g for _, g in self.pairs)

    def gt_for_det(self) -> dict:
        return {d: g for d, g in self.pairs}


@dataclass(frozen=True)
class TargetConfig:
    """Which matcher builds the pairs and which value becomes the target score."""

    matching: str = "localization"
    target: str = "iou"

    def __post_init__(self):
        if self.matching not in MATCHING_MODES:
            raise ValueError(f"matching must be one of {MATCHING_MODES}, got {self.matching!r}")
        if self.target not in TARGET_MODES:
            raise ValueError(f"target must be one of {TARGET_MODES}, got {self.target!r}")


def greedy_match_by_overlap(dets, gts) -> Matching:
    """Localization-first matching for one image.

    Sweeping levels 0.95, 0.90, ..., 0.5: each unmatched ground truth, in
    input order, claims the unmatched same-class detection with maximum IoU
    at or above the level; IoU ties go to the lowest det_id.
    """
    ious = iou_matrix([d.box for d in dets], [g.box for g in gts])
    det_taken = np.zeros(len(dets), dtype=bool)
    gt_taken = np.zeros(len(gts), dtype=bool)
    det_order = sorted(range(len(dets)), key=lambda i: dets[i].det_id)
    pairs = []
    for level in OVERLAP_LEVELS:
        for j, gt in enumerate(gts):
            if gt_taken[j]:
                continue
            best_i = -1
            best_iou = -1.0
            for i in det_order:
                if det_taken[i] or dets[i].class_idx != gt.class_idx:
                    continue
                v = ious[i, j]
                if v >= level and v > best_iou:
                    best_i, best_iou = i, v
            if best_i >= 0:
                det_taken[best_i] = True
                gt_taken[j] = True
                pairs.append((dets[best_i].det_id, gt.gt_id))
    return Matching(pairs=tuple(pairs))


def greedy_match_by_confidence(dets, gts) -> Matching:
    """Confidence-first matching for one image.

    Detections in descending score order (ties: lower det_id first) each take
    the unmatched same-class ground truth of highest IoU, requiring IoU at or
    above the 0.5 floor; IoU ties go to the lowest gt_id.
    """
    ious = iou_matrix([d.box for d in dets], [g.box for g in gts])
    gt_taken = np.zeros(len(gts), dtype=bool)
    pairs = []
    for i in sorted(range(len(dets)), key=lambda k: (-dets[k].score, dets[k].det_id)):
        best_j = -1
        best_iou = -1.0
        for j, gt in enumerate(gts):
            if gt_taken[j] or gt.class_idx != dets[i].class_idx:
                continue
            v = ious[i, j]
            if v >= CONFIDENCE_MATCH_FLOOR and v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0:
            gt_taken[best_j] = True
            pairs.append((dets[i].det_id, gts[best_j].gt_id))
    return Matching(pairs=tuple(pairs))


def match_image(image: ImageRecord, mode: str) -> Matching:
    if mode == "localization":
        return greedy_match_by_overlap(image.dets, image.gts)
    if mode == "confidence":
        return greedy_match_by_confidence(image.dets, image.gts)
    raise ValueError(f"unknown matching mode {mode!r}")


def assign_targets(dets, gts, matching: Matching, target_mode: str = "iou") -> np.ndarray:
    """Per-detection target scores in [0, 1], aligned with the ``dets`` order.

    ``iou`` mode: the IoU with the matched ground truth, 0 if unmatched.
    ``binary`` mode: 1 if matched, 0 otherwise.
    """
    if target_mode not in TARGET_MODES:
        raise ValueError(f"target mode must be one of {TARGET_MODES}, got {target_mode!r}")
    gt_by_id = {g.gt_id: g for g in gts}
    pair_map = matching.gt_for_det()
    ious = iou_matrix([d.box for d in dets], [g.box for g in gts])
    gt_pos = {g.gt_id: j for j, g in enumerate(gts)}
    out = np.zeros(len(dets), dtype=np.float64)
    for i, det in enumerate(dets):
        gt_id = pair_map.get(det.det_id)
        if gt_id is None:
            continue
        if gt_by_id[gt_id].class_idx != det.class_idx:
            raise ValueError(
                f"matching pairs det {det.det_id} (class {det.class_idx}) with "
                f"gt {gt_id} (class {gt_by_id[gt_id].class_idx})"
            )
        out[i] = 1.0 if target_mode == "binary" else ious[i, gt_pos[gt_id]]
    return out


def apply_targets(images, config: TargetConfig | None = None) -> list[ImageRecord]:
    """Replace every detection score with its target; boxes and classes unchanged."""
    config = config or TargetConfig()
    out = []
    for rec in images:
        matching = match_image(rec, config.matching)
        targets = assign_targets(rec.dets, rec.gts, matching, config.target)
        out.append(rec.with_scores(targets))
    return out


def target_ap_report(
    images,
    config: TargetConfig | None = None,
    params: EvalParams | None = None,
    num_classes: int | None = None,
) -> ApReport:
    """AP of the dataset after rescoring every detection to its target value."""
    return evaluate(apply_targets(images, config), params, num_classes)
