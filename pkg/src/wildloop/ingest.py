"""Dataset ingestion: image manifest, human labels, and detector output.

The detector output is consumed in the MegaDetector batch JSON format
(top-level ``images`` array; per-image ``detections`` with ``category``,
``conf`` and normalized ``bbox``).  The detector itself is an external tool;
this module only loads and filters its results.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import (
    DuplicateImageId,
    MalformedRecord,
    MissingFile,
    UnknownLabel,
)

logger = logging.getLogger(__name__)

# Reserved class name for images without animals.
EMPTY_CLASS = "empty"

# Detector category tags in MegaDetector batch output.
CATEGORY_ANIMAL = "animal"
CATEGORY_PERSON = "person"
CATEGORY_VEHICLE = "vehicle"
_MD_CATEGORIES = {"1": CATEGORY_ANIMAL, "2": CATEGORY_PERSON, "3": CATEGORY_VEHICLE}

# Tolerance for detector rounding spill outside [0, 1].
BBOX_EPS = 1e-6


@dataclass(frozen=True)
class Detection:
    """One detector box: normalized rectangle, confidence, category tag."""

    bbox: tuple[float, float, float, float]  # (x, y, w, h), all in [0, 1]
    confidence: float
    category: str = CATEGORY_ANIMAL

    def validate(self, location=None):
        x, y, w, h = self.bbox
        if not (-BBOX_EPS <= x <= 1 + BBOX_EPS and -BBOX_EPS <= y <= 1 + BBOX_EPS):
            raise MalformedRecord(f"bbox origin out of range: {self.bbox}", location)
        if w <= 0 or h <= 0:
            raise MalformedRecord(f"bbox has non-positive extent: {self.bbox}", location)
        if w > 1 - x + BBOX_EPS or h > 1 - y + BBOX_EPS:
            raise MalformedRecord(f"bbox exceeds image bounds: {self.bbox}", location)
        if not 0.0 <= self.confidence <= 1.0:
            raise MalformedRecord(
                f"confidence {self.confidence} outside [0, 1]", location
            )


@dataclass(frozen=True)
class DetectionSet:
    """All detector boxes of one image, input order preserved."""

    image_id: str
    detections: tuple[Detection, ...] = ()

    def __len__(self):
        return len(self.detections)


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    station_id: str
    file_path: str | None = None
    label: str | None = None
    capture_time: str | None = None


@dataclass(frozen=True)
class LabelSpace:
    """Ordered class names; must contain the reserved class ``empty``."""

    classes: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise UnknownLabel(f"duplicate class names in {self.classes}")
        if EMPTY_CLASS not in self.classes:
            raise UnknownLabel(f"label space must contain '{EMPTY_CLASS}'")
        if len(self.classes) < 2:
            raise UnknownLabel("label space needs at least 2 classes")

    def __len__(self):
        return len(self.classes)

    def __contains__(self, name):
        return name in self.classes

    def index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise UnknownLabel(f"unknown class '{name}'") from None

    @property
    def empty_index(self) -> int:
        return self.classes.index(EMPTY_CLASS)


@dataclass
class Dataset:
    """Canonical project dataset: images, their detections, the label space."""

    images: dict[str, ImageRecord]
    detections: dict[str, DetectionSet]
    label_space: LabelSpace
    root: Path | None = None

    def __post_init__(self):
        # Every image owns exactly one DetectionSet, possibly empty.
        for image_id in self.images:
            if image_id not in self.detections:
                self.detections[image_id] = DetectionSet(image_id)

    def __len__(self):
        return len(self.images)

    @property
    def image_ids(self) -> list[str]:
        return list(self.images)

    def labeled_ids(self) -> list[str]:
        return [i for i, rec in self.images.items() if rec.label is not None]

    def stations(self) -> list[str]:
        return sorted({rec.station_id for rec in self.images.values()})

    def with_labels(self, labels: dict[str, str]) -> "Dataset":
        """Copy of the dataset with the given labels applied on top."""
        images = dict(self.images)
        for image_id, label in labels.items():
            if label not in self.label_space:
                raise UnknownLabel(f"unknown class '{label}' for image '{image_id}'")
            images[image_id] = replace(images[image_id], label=label)
        return Dataset(images, dict(self.detections), self.label_space, self.root)


def filter_high_conf(ds: DetectionSet, alpha: float):
    """Partition a DetectionSet at the confidence threshold ``alpha``.

    Returns ``(high, low)``: ``high`` holds animal boxes with confidence
    >= alpha in input order, ``low`` everything else.  The comparison is
    inclusive so a grid value of 0.1 admits boxes at exactly 0.1.
    Person/vehicle boxes are never high-confidence regardless of score.
    """
    high, low = [], []
    for det in ds.detections:
        if det.category == CATEGORY_ANIMAL and det.confidence >= alpha:
            high.append(det)
        else:
            low.append(det)
    return high, low


def iter_high_conf(ds: DetectionSet, alpha: float) -> list[tuple[int, Detection]]:
    """High-confidence animal boxes with their original positions in ``ds``.

    The position feeds crop ids, which must be stable under retrieval order.
    """
    return [
        (i, det)
        for i, det in enumerate(ds.detections)
        if det.category == CATEGORY_ANIMAL and det.confidence >= alpha
    ]


# --- file loading -----------------------------------------------------------


def _read_csv(path: Path, required: list[str]):
    if not path.is_file():
        raise MissingFile(str(path))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise MalformedRecord(f"missing column '{col}' in {path.name}", path.name)
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def load_manifest(path: str | Path) -> dict[str, ImageRecord]:
    """Read the image manifest CSV (image_id, station_id[, file_path, capture_time])."""
    path = Path(path)
    images: dict[str, ImageRecord] = {}
    for lineno, row in _read_csv(path, ["image_id", "station_id"]):
        image_id = (row.get("image_id") or "").strip()
        station_id = (row.get("station_id") or "").strip()
        if not image_id:
            raise MalformedRecord("empty image_id", f"{path.name}:{lineno}")
        if not station_id:
            raise MalformedRecord("empty station_id", f"{path.name}:{lineno}")
        if image_id in images:
            raise DuplicateImageId(f"duplicate image_id '{image_id}' at {path.name}:{lineno}")
        images[image_id] = ImageRecord(
            image_id=image_id,
            station_id=station_id,
            file_path=(row.get("file_path") or "").strip() or None,
            capture_time=(row.get("capture_time") or "").strip() or None,
        )
    return images


def load_labels(path: str | Path) -> dict[str, str]:
    """Read the labels CSV (image_id, label)."""
    path = Path(path)
    labels: dict[str, str] = {}
    for lineno, row in _read_csv(path, ["image_id", "label"]):
        image_id = (row.get("image_id") or "").strip()
        label = (row.get("label") or "").strip()
        if not image_id or not label:
            raise MalformedRecord("empty image_id or label", f"{path.name}:{lineno}")
        labels[image_id] = label
    return labels


def parse_detection_entry(entry, index, location) -> Detection:
    if "conf" not in entry:
        raise MalformedRecord("detection without 'conf'", location)
    if "bbox" not in entry or "category" not in entry:
        raise MalformedRecord("detection without 'bbox' or 'category'", location)
    category = _MD_CATEGORIES.get(str(entry["category"]))
    if category is None:
        raise MalformedRecord(f"unknown detector category {entry['category']!r}", location)
    bbox = entry["bbox"]
    if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
        raise MalformedRecord(f"bbox must be [x, y, w, h], got {bbox!r}", location)
    x, y, w, h = (float(v) for v in bbox)
    # Real detector output spills slightly outside [0, 1]; clamp and warn.
    cx, cy = min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0)
    cw, ch = min(w, 1.0 - cx), min(h, 1.0 - cy)
    if (
        abs(cx - x) > BBOX_EPS
        or abs(cy - y) > BBOX_EPS
        or abs(cw - w) > BBOX_EPS
        or abs(ch - h) > BBOX_EPS
    ):
        if x < -BBOX_EPS or y < -BBOX_EPS or w - (1 - x) > 0.1 or h - (1 - y) > 0.1:
            raise MalformedRecord(f"bbox far outside image: {bbox!r}", location)
        logger.warning("clamped bbox %s at %s", bbox, location)
        x, y, w, h = cx, cy, cw, ch
    det = Detection(bbox=(x, y, w, h), confidence=float(entry["conf"]), category=category)
    det.validate(location)
    return det


def load_detections(path: str | Path) -> dict[str, DetectionSet]:
    """Read a MegaDetector batch output JSON file.

    Image entries are keyed by the 'file' field.  Unknown extra fields are
    ignored; structurally invalid entries raise MalformedRecord with their
    position in the file.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid JSON: {exc}", path.name) from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise MalformedRecord("detector file must have a top-level 'images' array", path.name)

    result: dict[str, DetectionSet] = {}
    for i, entry in enumerate(doc["images"]):
        loc = f"{path.name}:images[{i}]"
        if not isinstance(entry, dict) or "file" not in entry:
            raise MalformedRecord("image entry without 'file'", loc)
        image_id = str(entry["file"])
        if image_id in result:
            raise DuplicateImageId(f"duplicate detector entry for '{image_id}' at {loc}")
        dets = []
        for j, det_entry in enumerate(entry.get("detections") or []):
            dets.append(parse_detection_entry(det_entry, j, f"{loc}.detections[{j}]"))
        result[image_id] = DetectionSet(image_id, tuple(dets))
    return result


def load_project(
    manifest_path: str | Path,
    labels_path: str | Path | None,
    detections_path: str | Path,
    label_space: LabelSpace,
) -> Dataset:
    """Build the canonical Dataset from manifest + labels + detector output.

    Labels are validated against the label space; detector entries that do
    not appear in the manifest are rejected.
    """
    images = load_manifest(manifest_path)
    detections = load_detections(detections_path)

    unknown = set(detections) - set(images)
    if unknown:
        sample = sorted(unknown)[0]
        raise MalformedRecord(
            f"detector file lists {len(unknown)} image(s) absent from the manifest, "
            f"e.g. '{sample}'"
        )

    if labels_path is not None:
        labels = load_labels(labels_path)
        for image_id, label in labels.items():
            if image_id not in images:
                raise MalformedRecord(f"label for unknown image '{image_id}'")
            if label not in label_space:
                raise UnknownLabel(f"label '{label}' for '{image_id}' not in label space")
            images[image_id] = replace(images[image_id], label=label)

    root = Path(manifest_path).resolve().parent
    return Dataset(images=images, detections=detections, label_space=label_space, root=root)


def write_manifest(path: str | Path, images) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "station_id", "file_path", "capture_time"])
        for rec in images:
            writer.writerow([rec.image_id, rec.station_id, rec.file_path or "", rec.capture_time or ""])


def write_labels(path: str | Path, labels: dict[str, str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "label"])
        for image_id in sorted(labels):
            writer.writerow([image_id, labels[image_id]])


def detections_to_json(detections: dict[str, DetectionSet]) -> dict:
    """Serialize DetectionSets back to the detector batch format."""
    inv = {CATEGORY_ANIMAL: "1", CATEGORY_PERSON: "2", CATEGORY_VEHICLE: "3"}
    images = []
    for image_id in sorted(detections):
        ds = detections[image_id]
        images.append(
            {
                "file": image_id,
                "detections": [
                    {
                        "category": inv[d.category],
                        "conf": d.confidence,
                        "bbox": list(d.bbox),
                    }
                    for d in ds.detections
                ],
            }
        )
    return {"images": images}


def write_detections(path: str | Path, detections: dict[str, DetectionSet]) -> None:
    doc = detections_to_json(detections)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
