"""Rank images by how much rescoring changed their confidence vectors.

The change measure is the cosine distance between the per-image vectors of
confidences before and after rescoring; the report lists images in
decreasing order of change. Optional views restrict to images with few
detections or to detections whose confidence clears a floor on either side.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .validation import check_aligned_detections

__all__ = ["RankEntry", "rank_images"]

logger = logging.getLogger(__name__)


@dataclass
class RankEntry:
    image_id: int
    distance: float
    before: np.ndarray
    after: np.ndarray


def cosine_distance(v: np.ndarray, w: np.ndarray) -> float:
    nv = math.sqrt(float(v @ v))
    nw = math.sqrt(float(w @ w))
    if nv == 0.0 or nw == 0.0:
        raise ZeroDivisionError("cosine distance undefined for a zero vector")
    return 1.0 - float(v @ w) / (nv * nw)


def rank_images(
    before,
    after,
    top: int | None = None,
    max_dets: int | None = None,
    min_score: float | None = None,
) -> list[RankEntry]:
    """Sorted rescoring-change report over aligned before/after datasets.

    ``max_dets`` keeps only images with at most that many detections;
    ``min_score`` keeps only detections whose confidence exceeds the floor on
    at least one side (both vectors stay aligned). Images whose filtered
    vector has zero norm on either side are skipped with a warning.
    """
    entries = []
    for rec_before, rec_after in check_aligned_detections(before, after):
        if max_dets is not None and len(rec_before.dets) > max_dets:
            continue
        dets_b = sorted(rec_before.dets, key=lambda d: d.det_id)
        dets_a = sorted(rec_after.dets, key=lambda d: d.det_id)
        v = np.array([d.score for d in dets_b], dtype=np.float64)
        w = np.array([d.score for d in dets_a], dtype=np.float64)
        if min_score is not None:
            keep = (v > min_score) | (w > min_score)
            v, w = v[keep], w[keep]
        if len(v) == 0:
            continue
        try:
            d = cosine_distance(v, w)
        except ZeroDivisionError:
            logger.warning(
                "image %s skipped: zero-norm confidence vector", rec_before.image_id
            )
            continue
        entries.append(RankEntry(image_id=rec_before.image_id, distance=d, before=v, after=w))
    entries.sort(key=lambda e: (-e.distance, e.image_id))
    if top is not None:
        entries = entries[:top]
    return entries
