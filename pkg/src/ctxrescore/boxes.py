"""Geometric primitives and per-image detection records.

Boxes are axis-aligned rectangles in pixel coordinates, stored as
``(x, y, w, h)`` with ``(x, y)`` the top-left corner. All geometry is
computed in 64-bit floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "BBox",
    "Detection",
    "GroundTruth",
    "ImageRecord",
    "CategoryTable",
    "iou",
    "iou_matrix",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left corner plus width and height, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"box width/height must be >= 0, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class Detection:
    """A predicted box with contiguous class index and confidence in [0, 1].

    ``det_id`` is the per-image ordinal assigned after loading (and after
    the per-image cap), used for deterministic tie-breaking everywhere.
    """

    box: BBox
    class_idx: int
    score: float
    det_id: int

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class GroundTruth:
    """An annotated box with contiguous class index; ``gt_id`` is the per-image ordinal."""

    box: BBox
    class_idx: int
    gt_id: int


@dataclass
class ImageRecord:
    """One image's dimensions, ground truths and detections."""

    image_id: int
    width: float
    height: float
    gts: list[GroundTruth] = field(default_factory=list)
    dets: list[Detection] = field(default_factory=list)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"image {self.image_id}: width/height must be > 0, "
                f"got {self.width}x{self.height}"
            )

    def with_scores(self, scores) -> "ImageRecord":
        """Copy of this record with detection scores replaced, everything else intact.

        ``scores`` is aligned with ``dets`` by position.
        """
        if len(scores) != len(self.dets):
            raise ValueError(
                f"image {self.image_id}: got {len(scores)} scores "
                f"for {len(self.dets)} detections"
            )
        new_dets = [replace(d, score=float(s)) for d, s in zip(self.dets, scores)]
        return ImageRecord(self.image_id, self.width, self.height, list(self.gts), new_dets)


@dataclass(frozen=True)
class CategoryTable:
    """Bijection between external category ids and contiguous class indices.

    Indices are assigned by ascending external id so one-hot layouts are
    reproducible across runs and files.
    """

    id_to_idx: dict
    names: tuple
    supercategories: tuple

    @property
    def num_classes(self) -> int:
        return len(self.names)

    @property
    def idx_to_id(self) -> dict:
        return {v: k for k, v in self.id_to_idx.items()}

    @staticmethod
    def from_categories(categories) -> "CategoryTable":
        """Build a table from ``(id, name, supercategory)`` triples."""
        cats = sorted(categories, key=lambda c: c[0])
        ids = [c[0] for c in cats]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate category ids: {ids}")
        return CategoryTable(
            id_to_idx={cid: i for i, cid in enumerate(ids)},
            names=tuple(c[1] for c in cats),
            supercategories=tuple(c[2] for c in cats),
        )


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when the union has zero area."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU between two box sequences, shape ``(len(a), len(b))``.

    Matches :func:`iou` bit-for-bit (same multiply/divide order), so scalar
    and vectorized paths are interchangeable in exact comparisons.
    """
    n, m = len(boxes_a), len(boxes_b)
    if n == 0 or m == 0:
        return np.zeros((n, m), dtype=np.float64)
    a = np.array([b.as_tuple() for b in boxes_a], dtype=np.float64)
    b = np.array([b.as_tuple() for b in boxes_b], dtype=np.float64)
    ax, ay, aw, ah = a[:, 0:1], a[:, 1:2], a[:, 2:3], a[:, 3:4]
    bx, by, bw, bh = b[None, :, 0], b[None, :, 1], b[None, :, 2], b[None, :, 3]
    ix = np.minimum(ax + aw, bx + bw) - np.maximum(ax, bx)
    iy = np.minimum(ay + ah, by + bh) - np.maximum(ay, by)
    inter = np.where((ix > 0.0) & (iy > 0.0), ix * iy, 0.0)
    union = aw * ah + bw * bh - inter
    out = np.zeros((n, m), dtype=np.float64)
    np.divide(inter, union, out=out, where=(inter > 0.0) & (union > 0.0))
    return out
