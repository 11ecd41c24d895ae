"""COCO-style Average Precision over IoU thresholds, classes and size ranges.

Per class and IoU threshold, detections are matched greedily in descending
confidence order, pooled across images into a precision-recall curve, and
the curve is interpolated on a fixed recall grid whose mean is the AP for
that cell. The headline number averages the defined cells.

All final reductions use correctly rounded summation (``math.fsum``), so
reported values are independent of accumulation order and bit-identical
across input permutations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boxes import ImageRecord, iou_matrix

__all__ = [
    "EvalParams",
    "PRCurve",
    "ApReport",
    "match_for_ap",
    "interpolate_precision",
    "ap_class_threshold",
    "evaluate",
]


def _default_thresholds() -> tuple[float, ...]:
    # Exact decimal floats: k/100 avoids accumulation drift from repeated 0.05 adds.
    return tuple(k / 100.0 for k in range(50, 100, 5))


def _default_area_ranges() -> dict:
    return {
        "all": (0.0, math.inf),
        "small": (0.0, 32.0**2),
        "medium": (32.0**2, 96.0**2),
        "large": (96.0**2, math.inf),
    }


@dataclass(frozen=True)
class EvalParams:
    """Evaluation protocol knobs.

    ``area_ranges`` maps a range name to a half-open ``[lo, hi)`` interval of
    box areas in pixels squared. The per-class/threshold matrix in the report
    always refers to the ``all`` range.
    """

    iou_thresholds: tuple = field(default_factory=_default_thresholds)
    recall_points: int = 101
    area_ranges: dict = field(default_factory=_default_area_ranges)
    max_dets: int = 100

    def __post_init__(self):
        ts = tuple(self.iou_thresholds)
        if not ts or any(t2 <= t1 for t1, t2 in zip(ts, ts[1:])):
            raise ValueError(f"iou thresholds must be strictly increasing, got {ts}")
        if not all(0.0 < t <= 1.0 for t in ts):
            raise ValueError(f"iou thresholds must lie in (0, 1], got {ts}")
        if self.recall_points < 2:
            raise ValueError("recall grid needs at least 2 points")
        if "all" not in self.area_ranges:
            raise ValueError("area_ranges must include an 'all' range")
        object.__setattr__(self, "iou_thresholds", ts)

    @property
    def recall_grid(self) -> np.ndarray:
        n = self.recall_points
        return np.array([i / (n - 1) for i in range(n)], dtype=np.float64)


@dataclass
class PRCurve:
    """Raw precision-recall points and their interpolation on the recall grid."""

    grid: np.ndarray
    precision: np.ndarray
    raw_recall: np.ndarray
    raw_precision: np.ndarray

    @property
    def average_precision(self) -> float:
        return math.fsum(self.precision.tolist()) / len(self.grid)


@dataclass
class ApReport:
    """Aggregated AP values in [0, 1]; ``None``/NaN marks undefined entries.

    ``per_class_threshold[c, t]`` is the AP of class ``c`` at threshold index
    ``t`` over the ``all`` area range; rows of classes without ground truth
    are NaN and excluded from every mean.
    """

    ap: float | None
    ap50: float | None
    ap75: float | None
    ap_small: float | None
    ap_medium: float | None
    ap_large: float | None
    per_class_threshold: np.ndarray
    class_gt_counts: np.ndarray
    thresholds: tuple

    def summary_lines(self, scale: float = 1.0) -> list[str]:
        def fmt(v):
            return "undefined" if v is None else f"{v * scale:.6f}"

        return [
            f"AP        {fmt(self.ap)}",
            f"AP50      {fmt(self.ap50)}",
            f"AP75      {fmt(self.ap75)}",
            f"AP_small  {fmt(self.ap_small)}",
            f"AP_medium {fmt(self.ap_medium)}",
            f"AP_large  {fmt(self.ap_large)}",
        ]


def _det_order(dets) -> list[int]:
    """Processing order: descending score, then ascending det_id."""
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].det_id))


def _greedy_match(order, ious, threshold, gt_ignore=None):
    """Greedy confidence-order matching against unmatched ground truths.

    ``order`` lists detection rows of ``ious`` in processing order. Each
    detection takes the unmatched gt of highest IoU >= threshold (ties go to
    the lowest gt index). When ``gt_ignore`` is given, non-ignored gts are
    preferred; an ignored gt is taken only if no regular one qualifies.

    Returns an array mapping detection row -> gt column or -1.
    """
    n_det, n_gt = ious.shape
    match = np.full(n_det, -1, dtype=np.int64)
    if n_gt == 0:
        return match
    taken = np.zeros(n_gt, dtype=bool)
    if gt_ignore is None:
        gt_ignore = np.zeros(n_gt, dtype=bool)
    for d in order:
        row = ious[d]
        free = ~taken
        cand = free & ~gt_ignore & (row >= threshold)
        if not cand.any():
            cand = free & gt_ignore & (row >= threshold)
            if not cand.any():
                continue
        # argmax over masked row; first maximum wins, i.e. lowest gt index.
        j = int(np.argmax(np.where(cand, row, -1.0)))
        match[d] = j
        taken[j] = True
    return match


def match_for_ap(dets, gts, threshold):
    """Match same-class detections of one image against its ground truths.

    Returns, per detection (aligned with the input order), the ``gt_id`` it
    matched or ``None`` for a false positive.
    """
    classes = {d.class_idx for d in dets} | {g.class_idx for g in gts}
    if len(classes) > 1:
        raise ValueError(f"match_for_ap expects a single class, got {sorted(classes)}")
    ious = iou_matrix([d.box for d in dets], [g.box for g in gts])
    match = _greedy_match(_det_order(dets), ious, threshold)
    return [gts[j].gt_id if j >= 0 else None for j in match]


def interpolate_precision(raw_points, grid=None) -> PRCurve:
    """Interpolate raw (recall, precision) points onto the recall grid.

    The value at grid recall ``r`` is the maximum raw precision at any recall
    at or above ``r``; grid points beyond the highest reached recall get 0.
    Raw recalls must be non-decreasing (they are, along a detection ranking).
    """
    if grid is None:
        grid = EvalParams().recall_grid
    grid = np.asarray(grid, dtype=np.float64)
    raw = list(raw_points)
    rec = np.array([p[0] for p in raw], dtype=np.float64)
    prec = np.array([p[1] for p in raw], dtype=np.float64)
    if np.any(np.diff(rec) < 0):
        raise ValueError("raw recall values must be non-decreasing")
    out = np.zeros(len(grid), dtype=np.float64)
    if len(raw) > 0:
        # Suffix running maximum; entry k = max precision at recall >= rec[k].
        suffix = np.maximum.accumulate(prec[::-1])[::-1]
        idx = np.searchsorted(rec, grid, side="left")
        inside = idx < len(rec)
        out[inside] = suffix[idx[inside]]
    return PRCurve(grid=grid, precision=out, raw_recall=rec, raw_precision=prec)


class _ClassEntries:
    """Per-class detection pool with per-image IoU matrices, reused across thresholds."""

    def __init__(self):
        self.images = []  # (image_pos, order, ious, det_scores, det_areas, gt_areas)
        self.n_gts = 0

    def add_image(self, image_pos, dets, gts):
        if not dets and not gts:
            return
        order = _det_order(dets)
        ious = iou_matrix([d.box for d in dets], [g.box for g in gts])
        self.images.append(
            (
                image_pos,
                order,
                ious,
                np.array([d.score for d in dets], dtype=np.float64),
                np.array([d.box.area for d in dets], dtype=np.float64),
                np.array([g.box.area for g in gts], dtype=np.float64),
                [d.det_id for d in dets],
            )
        )
        self.n_gts += len(gts)


def _collect_classes(images, num_classes) -> list[_ClassEntries]:
    per_class = [_ClassEntries() for _ in range(num_classes)]
    for pos, rec in enumerate(images):
        by_class_det: dict[int, list] = {}
        by_class_gt: dict[int, list] = {}
        for d in rec.dets:
            by_class_det.setdefault(d.class_idx, []).append(d)
        for g in rec.gts:
            by_class_gt.setdefault(g.class_idx, []).append(g)
        for c in set(by_class_det) | set(by_class_gt):
            per_class[c].add_image(pos, by_class_det.get(c, []), by_class_gt.get(c, []))
    return per_class


def _class_ap_at_threshold(entries: _ClassEntries, threshold, grid, area_range=None):
    """AP for one (class, threshold, area range) cell, or NaN when undefined.

    Matching runs per image; surviving detections pool across images sorted
    by descending score (ties: earlier image, then lower det_id) into the
    precision-recall curve of Eq.-style 101-point interpolation.
    """
    pooled = []  # (-score, image_pos, det_id, tp_flag) -- ignored dets excluded
    n_gt_counted = 0
    for image_pos, order, ious, scores, det_areas, gt_areas, det_ids in entries.images:
        if area_range is None:
            gt_ignore = None
            n_gt_counted += ious.shape[1]
        else:
            lo, hi = area_range
            gt_ignore = ~((gt_areas >= lo) & (gt_areas < hi))
            n_gt_counted += int((~gt_ignore).sum())
        match = _greedy_match(order, ious, threshold, gt_ignore)
        for d in range(len(scores)):
            j = match[d]
            if j >= 0:
                if gt_ignore is not None and gt_ignore[j]:
                    continue  # matched an out-of-range gt: ignored
                pooled.append((-scores[d], image_pos, det_ids[d], True))
            else:
                if area_range is not None:
                    lo, hi = area_range
                    if not (lo <= det_areas[d] < hi):
                        continue  # unmatched and out of range: ignored
                pooled.append((-scores[d], image_pos, det_ids[d], False))
    if n_gt_counted == 0:
        return math.nan
    pooled.sort(key=lambda e: (e[0], e[1], e[2]))
    return _ap_from_pooled([e[3] for e in pooled], n_gt_counted, grid)


def _ap_from_pooled(tp_flags, n_gt, grid) -> float:
    """AP of one cell from pooled true-positive flags in ranking order."""
    tp = fp = 0
    points = []
    for is_tp in tp_flags:
        if is_tp:
            tp += 1
        else:
            fp += 1
        points.append((tp / n_gt, tp / (tp + fp)))
    return interpolate_precision(points, grid).average_precision


def ap_class_threshold(images, class_idx, threshold, params: EvalParams | None = None):
    """AP of one class at one IoU threshold over the ``all`` range.

    Raises when the class has no ground truth (its AP is undefined and the
    class is excluded from aggregate means).
    """
    params = params or EvalParams()
    num_classes = class_idx + 1
    for rec in images:
        for obj in list(rec.dets) + list(rec.gts):
            num_classes = max(num_classes, obj.class_idx + 1)
    entries = _collect_classes(images, num_classes)[class_idx]
    if entries.n_gts == 0:
        raise ValueError(f"class {class_idx} has no ground truth; AP undefined")
    return _class_ap_at_threshold(entries, threshold, params.recall_grid)


def _mean_defined(values) -> float | None:
    vals = [v for v in values if not math.isnan(v)]
    if not vals:
        return None
    return math.fsum(vals) / len(vals)


def infer_num_classes(images) -> int:
    n = 0
    for rec in images:
        for d in rec.dets:
            n = max(n, d.class_idx + 1)
        for g in rec.gts:
            n = max(n, g.class_idx + 1)
    return n


def evaluate(images, params: EvalParams | None = None, num_classes: int | None = None) -> ApReport:
    """Full AP report: headline mean, per-threshold slices, and size-range APs.

    The headline AP is the mean of per-class/threshold cells over classes
    that have ground truth. Size-range APs ignore out-of-range ground truths
    (removed from the recall denominator), detections matched to them, and
    unmatched detections whose own area is out of range.
    """
    params = params or EvalParams()
    if num_classes is None:
        num_classes = infer_num_classes(images)
    grid = params.recall_grid
    thresholds = params.iou_thresholds
    per_class = _collect_classes(images, num_classes)

    matrix = np.full((num_classes, len(thresholds)), math.nan)
    gt_counts = np.zeros(num_classes, dtype=np.int64)
    range_cells = {name: [] for name in params.area_ranges if name != "all"}
    for c, entries in enumerate(per_class):
        gt_counts[c] = entries.n_gts
        if entries.n_gts == 0:
            continue
        for ti, t in enumerate(thresholds):
            matrix[c, ti] = _class_ap_at_threshold(entries, t, grid)
        for name, rng in params.area_ranges.items():
            if name == "all":
                continue
            for t in thresholds:
                range_cells[name].append(_class_ap_at_threshold(entries, t, grid, rng))

    def threshold_mean(t_value):
        if t_value not in thresholds:
            return None
        ti = thresholds.index(t_value)
        return _mean_defined(matrix[:, ti].tolist())

    size_ap = {name: _mean_defined(cells) for name, cells in range_cells.items()}
    return ApReport(
        ap=_mean_defined(matrix.ravel().tolist()),
        ap50=threshold_mean(0.5),
        ap75=threshold_mean(0.75),
        ap_small=size_ap.get("small"),
        ap_medium=size_ap.get("medium"),
        ap_large=size_ap.get("large"),
        per_class_threshold=matrix,
        class_gt_counts=gt_counts,
        thresholds=thresholds,
    )
