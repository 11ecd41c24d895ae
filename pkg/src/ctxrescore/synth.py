"""Synthetic detection scenes and an exhaustive best-ordering oracle.

The generator plants ground truths uniformly inside the image and derives
detections from them: one primary detection per ground truth plus a sampled
number of duplicates, each with Gaussian location/size jitter proportional
to the box size and an optional class confusion; background false positives
are rejection-sampled to overlap no ground truth above IoU 0.1. Scores mix a
localization-quality term with uniform and Gaussian noise, so how strongly
confidence tracks IoU is controllable.

The oracle enumerates, per class, every strict priority ordering of that
class's detections (AP decomposes over classes) and reports the maximum
achievable AP together with a score assignment realizing it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .boxes import BBox, CategoryTable, Detection, GroundTruth, ImageRecord, iou, iou_matrix
from .evaluation import EvalParams, _ap_from_pooled, _greedy_match, infer_num_classes
from .io import MAX_DETS_PER_IMAGE

__all__ = ["SynthParams", "generate_scene", "generate_dataset", "BruteForceResult", "brute_force_best_ap"]


@dataclass(frozen=True)
class SynthParams:
    """Knobs controlling scene difficulty and noise."""

    n_images: int = 8
    n_classes: int = 3
    image_width: float = 640.0
    image_height: float = 480.0
    gts_per_image: tuple = (1, 3)
    duplicates_per_gt: tuple = (0, 2)
    jitter: float = 0.25
    confusion_prob: float = 0.1
    background_fp_rate: float = 1.0
    score_iou_weight: float = 0.5
    score_noise: float = 0.15
    min_box: float = 30.0
    max_box: float = 140.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.confusion_prob <= 1.0:
            raise ValueError(f"confusion_prob must be in [0, 1], got {self.confusion_prob}")
        if not 0.0 <= self.score_iou_weight <= 1.0:
            raise ValueError(f"score_iou_weight must be in [0, 1], got {self.score_iou_weight}")
        if self.jitter < 0 or self.score_noise < 0 or self.background_fp_rate < 0:
            raise ValueError("jitter, score_noise and background_fp_rate must be >= 0")
        for lo, hi in (self.gts_per_image, self.duplicates_per_gt):
            if lo < 0 or hi < lo:
                raise ValueError(f"range ({lo}, {hi}) must satisfy 0 <= lo <= hi")
        if not 0 < self.min_box <= self.max_box:
            raise ValueError("box size range must satisfy 0 < min <= max")


def _draw_box(params: SynthParams, rng) -> BBox:
    w = rng.uniform(params.min_box, min(params.max_box, params.image_width))
    h = rng.uniform(params.min_box, min(params.max_box, params.image_height))
    x = rng.uniform(0.0, params.image_width - w)
    y = rng.uniform(0.0, params.image_height - h)
    return BBox(x, y, w, h)


def _draw_score(quality: float, params: SynthParams, rng) -> float:
    s = (
        params.score_iou_weight * quality
        + (1.0 - params.score_iou_weight) * rng.uniform()
        + rng.normal(0.0, params.score_noise)
    )
    return float(np.clip(s, 1e-6, 1.0 - 1e-6))


def generate_scene(params: SynthParams, rng, image_id: int = 1) -> ImageRecord:
    """One image: planted ground truths plus jittered/confused/background detections."""
    rec = ImageRecord(image_id=image_id, width=params.image_width, height=params.image_height)
    lo, hi = params.gts_per_image
    n_gts = int(rng.integers(lo, hi + 1))
    for k in range(n_gts):
        rec.gts.append(
            GroundTruth(box=_draw_box(params, rng), class_idx=int(rng.integers(params.n_classes)), gt_id=k)
        )

    staged = []
    dup_lo, dup_hi = params.duplicates_per_gt
    for gt in rec.gts:
        for _ in range(1 + int(rng.integers(dup_lo, dup_hi + 1))):
            b = gt.box
            dx = rng.normal(0.0, params.jitter * b.w)
            dy = rng.normal(0.0, params.jitter * b.h)
            dw = rng.normal(0.0, params.jitter * b.w)
            dh = rng.normal(0.0, params.jitter * b.h)
            box = BBox(b.x + dx, b.y + dy, max(b.w + dw, 1.0), max(b.h + dh, 1.0))
            cls = gt.class_idx
            if params.n_classes > 1 and rng.random() < params.confusion_prob:
                cls = int(rng.integers(params.n_classes - 1))
                if cls >= gt.class_idx:
                    cls += 1
            staged.append((box, cls, _draw_score(iou(box, gt.box), params, rng)))

    for _ in range(int(rng.poisson(params.background_fp_rate))):
        for _ in range(50):
            box = _draw_box(params, rng)
            if all(iou(box, gt.box) < 0.1 for gt in rec.gts):
                staged.append((box, int(rng.integers(params.n_classes)), _draw_score(0.0, params, rng)))
                break

    if len(staged) > MAX_DETS_PER_IMAGE:
        keep = sorted(range(len(staged)), key=lambda i: (-staged[i][2], i))[:MAX_DETS_PER_IMAGE]
        staged = [staged[i] for i in sorted(keep)]
    rec.dets = [
        Detection(box=box, class_idx=cls, score=score, det_id=k)
        for k, (box, cls, score) in enumerate(staged)
    ]
    return rec


def generate_dataset(params: SynthParams) -> tuple[CategoryTable, list[ImageRecord]]:
    """Seeded dataset with a category table (classes paired into supercategories)."""
    rng = np.random.default_rng(params.seed)
    table = CategoryTable.from_categories(
        (i + 1, f"class_{i}", f"group_{i // 2}") for i in range(params.n_classes)
    )
    images = [generate_scene(params, rng, image_id=i + 1) for i in range(params.n_images)]
    return table, images


@dataclass
class BruteForceResult:
    """Maximum achievable AP and a score assignment realizing it."""

    best_ap: float | None
    best_scores: dict  # image_id -> per-detection scores aligned with rec.dets
    per_class_best: dict  # class_idx -> best mean-over-thresholds AP


def brute_force_best_ap(
    images,
    params: EvalParams | None = None,
    max_dets_per_class: int = 8,
) -> BruteForceResult:
    """Search all per-class detection orderings for the maximum achievable AP.

    AP is a function of the confidence ordering only, and it decomposes over
    classes, so each class's orderings are enumerated independently (at most
    ``max_dets_per_class`` factorial). Scores realizing an ordering are the
    rank-descending values (m-k)/m.
    """
    params = params or EvalParams()
    grid = params.recall_grid
    num_classes = infer_num_classes(images)
    best_scores = {rec.image_id: np.zeros(len(rec.dets)) for rec in images}

    oversized = {}
    refs_by_class: list[list] = [[] for _ in range(num_classes)]
    gts_by_class = np.zeros(num_classes, dtype=np.int64)
    for pos, rec in enumerate(images):
        for dpos, det in enumerate(rec.dets):
            refs_by_class[det.class_idx].append((pos, dpos))
        for gt in rec.gts:
            gts_by_class[gt.class_idx] += 1
    for c, refs in enumerate(refs_by_class):
        if len(refs) > max_dets_per_class:
            oversized[c] = len(refs)
    if oversized:
        raise ValueError(
            f"instance too large for exhaustive search: classes with more than "
            f"{max_dets_per_class} detections: {oversized}"
        )

    # Per (class, image): detection positions and IoU matrix against that
    # class's ground truths, shared by every ordering and threshold.
    per_class_best = {}
    defined_sums = []
    for c in range(num_classes):
        refs = refs_by_class[c]
        if gts_by_class[c] == 0:
            for k, (pos, dpos) in enumerate(refs):
                best_scores[images[pos].image_id][dpos] = (len(refs) - k) / max(len(refs), 1)
            continue
        by_image = {}
        for pos, dpos in refs:
            by_image.setdefault(pos, []).append(dpos)
        mats = {}
        for pos, dposs in by_image.items():
            rec = images[pos]
            gts = [g for g in rec.gts if g.class_idx == c]
            mats[pos] = (
                dposs,
                iou_matrix([rec.dets[i].box for i in dposs], [g.box for g in gts]),
            )
        m = len(refs)
        n_t = len(params.iou_thresholds)
        best_sum = -math.inf
        best_perm = tuple(range(m))
        for perm in itertools.permutations(range(m)) if m > 0 else [()]:
            vals = []
            for t in params.iou_thresholds:
                flags = {}
                for pos, (dposs, ious) in mats.items():
                    local_order = [k for k in perm if refs[k][0] == pos]
                    rows = [dposs.index(refs[k][1]) for k in local_order]
                    match = _greedy_match(rows, ious, t)
                    for k, row in zip(local_order, rows):
                        flags[k] = match[row] >= 0
                pooled = [flags[k] for k in perm]
                vals.append(_ap_from_pooled(pooled, int(gts_by_class[c]), grid))
            total = math.fsum(vals)
            if total > best_sum:
                best_sum = total
                best_perm = perm
        per_class_best[c] = best_sum / n_t
        defined_sums.append(best_sum)
        for rank, k in enumerate(best_perm):
            pos, dpos = refs[k]
            best_scores[images[pos].image_id][dpos] = (m - rank) / m

    n_t = len(params.iou_thresholds)
    best_ap = (
        math.fsum(defined_sums) / (len(defined_sums) * n_t) if defined_sums else None
    )
    return BruteForceResult(best_ap=best_ap, best_scores=best_scores, per_class_best=per_class_best)
