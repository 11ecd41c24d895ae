"""Detection-set to feature-sequence conversion for the rescoring model.

Each detection becomes ``[score] + one_hot(class) + [x/W, y/H, w/W, h/H]``;
with 80 classes this is the 85-dimensional layout. Rows are sorted by
descending confidence, padded with zeros to a fixed length of 100, and the
original positions are kept so predicted scores can be written back.

Normalized coordinates are stored verbatim: a box that extends past the
image edge yields values above 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import ImageRecord

__all__ = ["MAX_SEQ_LEN", "FeatureSequence", "feature_dim", "extract_features"]

MAX_SEQ_LEN = 100


def feature_dim(num_classes: int) -> int:
    return 1 + num_classes + 4


@dataclass
class FeatureSequence:
    """Padded feature matrix plus the bookkeeping to undo the sort.

    ``order[i]`` is the position in the source detection list that produced
    row ``i``; scores predicted for row ``i`` belong to that detection.
    """

    features: np.ndarray  # (MAX_SEQ_LEN, feature_dim)
    valid_len: int
    order: np.ndarray  # (valid_len,)

    def scores_for_dets(self, row_scores) -> np.ndarray:
        """Map per-row predictions back to source detection-list positions."""
        out = np.zeros(self.valid_len, dtype=np.float64)
        out[self.order] = np.asarray(row_scores, dtype=np.float64)[: self.valid_len]
        return out

    def permute(self, perm) -> "FeatureSequence":
        """New sequence with valid rows reordered by ``perm`` (padding untouched)."""
        perm = np.asarray(perm)
        L = self.valid_len
        feats = self.features.copy()
        feats[:L] = self.features[:L][perm]
        return FeatureSequence(features=feats, valid_len=L, order=self.order[perm])


def extract_features(image: ImageRecord, num_classes: int) -> FeatureSequence:
    """Build the sorted, padded feature sequence for one image's detections."""
    dets = image.dets
    if len(dets) > MAX_SEQ_LEN:
        raise ValueError(
            f"image {image.image_id}: {len(dets)} detections exceed the "
            f"sequence cap of {MAX_SEQ_LEN}"
        )
    n_feat = feature_dim(num_classes)
    feats = np.zeros((MAX_SEQ_LEN, n_feat), dtype=np.float64)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].det_id))
    for row, src in enumerate(order):
        det = dets[src]
        if not 0 <= det.class_idx < num_classes:
            raise ValueError(
                f"image {image.image_id}: class index {det.class_idx} does not fit "
                f"{num_classes} classes"
            )
        feats[row, 0] = det.score
        feats[row, 1 + det.class_idx] = 1.0
        feats[row, 1 + num_classes + 0] = det.box.x / image.width
        feats[row, 1 + num_classes + 1] = det.box.y / image.height
        feats[row, 1 + num_classes + 2] = det.box.w / image.width
        feats[row, 1 + num_classes + 3] = det.box.h / image.height
    return FeatureSequence(
        features=feats,
        valid_len=len(dets),
        order=np.array(order, dtype=np.int64),
    )
