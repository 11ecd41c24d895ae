"""Reading and writing COCO-format annotation and detection-result files.

Annotation files carry top-level ``images``, ``annotations`` and
``categories`` arrays; detection files are a flat list of
``{image_id, category_id, bbox, score}`` objects. Categories are remapped
to contiguous indices by ascending external id; crowd annotations are
dropped and counted in the load report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .boxes import BBox, CategoryTable, Detection, GroundTruth, ImageRecord

__all__ = [
    "MAX_DETS_PER_IMAGE",
    "LoadReport",
    "load_annotations",
    "load_detections",
    "save_annotations",
    "save_detections",
]

# Per-image detection cap applied at load time. Matches the padded sequence
# length used by the rescoring model and the standard evaluation cap.
MAX_DETS_PER_IMAGE = 100


@dataclass
class LoadReport:
    """Counters from a load pass."""

    n_images: int = 0
    n_annotations: int = 0
    n_crowd_dropped: int = 0
    n_detections: int = 0
    n_capped: int = 0


class FormatError(ValueError):
    """A file violated the expected annotation/detection schema."""


def _require(obj, key, context):
    try:
        return obj[key]
    except (KeyError, TypeError, IndexError):
        raise FormatError(f"{context}: missing field {key!r}") from None


def _read_bbox(raw, context) -> BBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise FormatError(f"{context}: bbox must be [x, y, w, h], got {raw!r}")
    x, y, w, h = (float(v) for v in raw)
    if w < 0 or h < 0:
        raise FormatError(f"{context}: negative box size w={w}, h={h}")
    return BBox(x, y, w, h)


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e


def load_annotations(path) -> tuple[CategoryTable, list[ImageRecord], LoadReport]:
    """Load a COCO annotation file into a category table and per-image records.

    Ground truths are attached to their image in annotation-file order and
    get ``gt_id`` 0, 1, ... per image. Annotations flagged ``iscrowd`` are
    excluded and counted in the report.
    """
    data = _load_json(path)
    for key in ("images", "annotations", "categories"):
        _require(data, key, str(path))

    table = CategoryTable.from_categories(
        (
            _require(c, "id", f"{path}: categories[{i}]"),
            _require(c, "name", f"{path}: categories[{i}]"),
            _require(c, "supercategory", f"{path}: categories[{i}]"),
        )
        for i, c in enumerate(data["categories"])
    )

    images: dict[int, ImageRecord] = {}
    order: list[int] = []
    for i, img in enumerate(data["images"]):
        ctx = f"{path}: images[{i}]"
        image_id = _require(img, "id", ctx)
        if image_id in images:
            raise FormatError(f"{ctx}: duplicate image id {image_id}")
        try:
            rec = ImageRecord(
                image_id=image_id,
                width=float(_require(img, "width", ctx)),
                height=float(_require(img, "height", ctx)),
            )
        except ValueError as e:
            raise FormatError(f"{ctx}: {e}") from None
        images[image_id] = rec
        order.append(image_id)

    report = LoadReport(n_images=len(images))
    for i, ann in enumerate(data["annotations"]):
        ctx = f"{path}: annotations[{i}]"
        if ann.get("iscrowd", 0):
            report.n_crowd_dropped += 1
            continue
        image_id = _require(ann, "image_id", ctx)
        if image_id not in images:
            raise FormatError(f"{ctx}: unknown image id {image_id}")
        category_id = _require(ann, "category_id", ctx)
        if category_id not in table.id_to_idx:
            raise FormatError(f"{ctx}: unknown category id {category_id}")
        rec = images[image_id]
        rec.gts.append(
            GroundTruth(
                box=_read_bbox(_require(ann, "bbox", ctx), ctx),
                class_idx=table.id_to_idx[category_id],
                gt_id=len(rec.gts),
            )
        )
        report.n_annotations += 1

    return table, [images[i] for i in order], report


def load_detections(path, table: CategoryTable, images: list[ImageRecord]) -> LoadReport:
    """Load a COCO results file into ``images``, replacing any existing detections.

    Detections are grouped per image and capped to the ``MAX_DETS_PER_IMAGE``
    highest scores (ties keep file order); ``det_id`` is assigned after the
    cap, following file order among the kept detections.
    """
    data = _load_json(path)
    if not isinstance(data, list):
        raise FormatError(f"{path}: detection file must be a JSON list")

    by_image = {rec.image_id: rec for rec in images}
    staged: dict[int, list[tuple[float, int, int, BBox]]] = {rec.image_id: [] for rec in images}
    for i, det in enumerate(data):
        ctx = f"{path}: detections[{i}]"
        image_id = _require(det, "image_id", ctx)
        if image_id not in by_image:
            raise FormatError(f"{ctx}: unknown image id {image_id}")
        category_id = _require(det, "category_id", ctx)
        if category_id not in table.id_to_idx:
            raise FormatError(f"{ctx}: unknown category id {category_id}")
        score = float(_require(det, "score", ctx))
        if not 0.0 <= score <= 1.0:
            raise FormatError(f"{ctx}: score {score} outside [0, 1]")
        box = _read_bbox(_require(det, "bbox", ctx), ctx)
        staged[image_id].append((score, i, table.id_to_idx[category_id], box))

    report = LoadReport(n_images=len(images))
    for rec in images:
        entries = staged[rec.image_id]
        if len(entries) > MAX_DETS_PER_IMAGE:
            # Keep the top scores; equal scores keep earlier file positions.
            keep = sorted(entries, key=lambda e: (-e[0], e[1]))[:MAX_DETS_PER_IMAGE]
            keep.sort(key=lambda e: e[1])
            report.n_capped += len(entries) - len(keep)
            entries = keep
        rec.dets = [
            Detection(box=box, class_idx=cls, score=score, det_id=k)
            for k, (score, _, cls, box) in enumerate(entries)
        ]
        report.n_detections += len(entries)
    return report


def save_annotations(path, table: CategoryTable, images: list[ImageRecord]) -> None:
    """Write ground truths as a COCO annotation file (inverse of :func:`load_annotations`)."""
    idx_to_id = table.idx_to_id
    annotations = []
    for rec in images:
        for gt in rec.gts:
            annotations.append(
                {
                    "id": len(annotations) + 1,
                    "image_id": rec.image_id,
                    "category_id": idx_to_id[gt.class_idx],
                    "bbox": list(gt.box.as_tuple()),
                    "area": gt.box.area,
                    "iscrowd": 0,
                }
            )
    payload = {
        "images": [
            {"id": rec.image_id, "width": rec.width, "height": rec.height} for rec in images
        ],
        "annotations": annotations,
        "categories": [
            {"id": idx_to_id[i], "name": table.names[i], "supercategory": table.supercategories[i]}
            for i in range(table.num_classes)
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, allow_nan=False)


def save_detections(path, table: CategoryTable, images: list[ImageRecord]) -> None:
    """Write detections as a COCO results file, in ``det_id`` order per image.

    JSON floats round-trip exactly, so save followed by load reproduces the
    in-memory records bit for bit.
    """
    idx_to_id = table.idx_to_id
    out = []
    for rec in images:
        for det in sorted(rec.dets, key=lambda d: d.det_id):
            out.append(
                {
                    "image_id": rec.image_id,
                    "category_id": idx_to_id[det.class_idx],
                    "bbox": list(det.box.as_tuple()),
                    "score": det.score,
                }
            )
    with open(path, "w", encoding="utf-8") as f:
        json.dump(out, f, allow_nan=False)
