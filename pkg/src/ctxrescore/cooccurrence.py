"""Class co-occurrence statistics over ground-truth annotations.

Entry ``(i, j)`` is the expected number of class-``j`` instances in an image
that contains at least one class-``i`` instance; on the diagonal the observed
instance itself is not counted (how many *additional* instances co-occur).
Rows of classes that never appear are NaN: "never seen" is distinct from
"never co-occurs".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import CategoryTable

__all__ = ["CooccurrenceMatrix", "cooccurrence_matrix"]


@dataclass
class CooccurrenceMatrix:
    values: np.ndarray  # (K, K); row i NaN when class i never appears
    images_per_class: np.ndarray  # (K,) number of images containing class i

    @property
    def num_classes(self) -> int:
        return len(self.images_per_class)


def cooccurrence_matrix(images, num_classes: int | None = None) -> CooccurrenceMatrix:
    """Expected co-occurrence counts from per-image ground-truth class counts."""
    if num_classes is None:
        num_classes = 0
        for rec in images:
            for g in rec.gts:
                num_classes = max(num_classes, g.class_idx + 1)
    counts = np.zeros((len(images), num_classes), dtype=np.int64)
    for r, rec in enumerate(images):
        for g in rec.gts:
            counts[r, g.class_idx] += 1
    present = counts > 0  # (n_images, K)
    images_per_class = present.sum(axis=0)
    values = np.full((num_classes, num_classes), np.nan)
    for i in range(num_classes):
        if images_per_class[i] == 0:
            continue
        totals = counts[present[:, i]].sum(axis=0).astype(np.float64)
        row = totals / images_per_class[i]
        row[i] -= 1.0
        values[i] = row
    return CooccurrenceMatrix(values=values, images_per_class=images_per_class)


def cooccurrence_csv_rows(matrix: CooccurrenceMatrix, table: CategoryTable) -> list[list[str]]:
    """CSV rows (header + one row per observed class) with class-name labels."""
    rows = [["class"] + list(table.names)]
    for i in range(matrix.num_classes):
        row = [table.names[i]]
        for j in range(matrix.num_classes):
            v = matrix.values[i, j]
            row.append("" if np.isnan(v) else repr(float(v)))
        rows.append(row)
    return rows
