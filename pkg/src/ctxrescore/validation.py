"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

from .boxes import ImageRecord
from .features import MAX_SEQ_LEN

__all__ = ["check_image_records", "check_aligned_detections"]


def check_image_records(images, num_classes: int | None = None, require_gts: bool = False):
    """Validate a list of ImageRecord inputs; returns the list unchanged.

    Checks id uniqueness, per-image det_id/gt_id ordinals, score bounds,
    class-index range and the per-image detection cap.
    """
    if not isinstance(images, (list, tuple)):
        raise TypeError(f"expected a list of ImageRecord, got {type(images).__name__}")
    seen = set()
    for rec in images:
        if not isinstance(rec, ImageRecord):
            raise TypeError(f"expected ImageRecord entries, got {type(rec).__name__}")
        if rec.image_id in seen:
            raise ValueError(f"duplicate image id {rec.image_id}")
        seen.add(rec.image_id)
        if len(rec.dets) > MAX_SEQ_LEN:
            raise ValueError(
                f"image {rec.image_id}: {len(rec.dets)} detections exceed the cap of {MAX_SEQ_LEN}"
            )
        if sorted(d.det_id for d in rec.dets) != list(range(len(rec.dets))):
            raise ValueError(f"image {rec.image_id}: det_id values must be the ordinals 0..n-1")
        if sorted(g.gt_id for g in rec.gts) != list(range(len(rec.gts))):
            raise ValueError(f"image {rec.image_id}: gt_id values must be the ordinals 0..n-1")
        for obj in list(rec.dets) + list(rec.gts):
            if obj.class_idx < 0 or (num_classes is not None and obj.class_idx >= num_classes):
                raise ValueError(
                    f"image {rec.image_id}: class index {obj.class_idx} out of range "
                    f"for {num_classes} classes"
                )
        if require_gts and not rec.gts:
            continue  # per-image emptiness is fine; dataset-level check below
    if require_gts and not any(rec.gts for rec in images):
        raise ValueError("no ground truth in any image; nothing to fit or score against")
    return images


def check_aligned_detections(before, after):
    """Check two datasets carry identical (box, class) detections per image, by det_id.

    Returns pairs of records aligned by image id.
    """
    by_id_after = {rec.image_id: rec for rec in after}
    if len(by_id_after) != len(after):
        raise ValueError("duplicate image ids in the second dataset")
    pairs = []
    for rec in before:
        other = by_id_after.get(rec.image_id)
        if other is None:
            raise ValueError(f"image {rec.image_id} missing from the second dataset")
        if len(rec.dets) != len(other.dets):
            raise ValueError(
                f"image {rec.image_id}: detection counts differ "
                f"({len(rec.dets)} vs {len(other.dets)})"
            )
        a = sorted(rec.dets, key=lambda d: d.det_id)
        b = sorted(other.dets, key=lambda d: d.det_id)
        for da, db in zip(a, b):
            if da.det_id != db.det_id or da.class_idx != db.class_idx or da.box != db.box:
                raise ValueError(
                    f"image {rec.image_id}: detection {da.det_id} differs in box or class"
                )
        pairs.append((rec, other))
    return pairs
