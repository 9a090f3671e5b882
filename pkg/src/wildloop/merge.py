"""Merge detector filtering and box-level scores into image-level labels.

An image with no high-confidence animal boxes is ``empty`` with confidence
1.0.  Otherwise the per-box score vectors are averaged with the detector
confidences as weights; the aggregate argmax (which may itself be ``empty``)
becomes the image label and its maximum entry the image confidence.  Images
whose confidence does not exceed the abstention threshold stay unlabeled for
later human review.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import HeadModel, predict_scores
from .embedding import ProviderRegistry
from .errors import LengthMismatch, UnnormalizedScore
from .imaging import AugmentationPolicy, CropConfig, CropRecord, crop_and_resize, load_image
from .ingest import (
    EMPTY_CLASS,
    Dataset,
    DetectionSet,
    LabelSpace,
    filter_high_conf,
    iter_high_conf,
)

SCORE_TOL = 1e-6


@dataclass(frozen=True)
class PipelineConfig:
    """Detector threshold, abstention threshold, and the embedder to use."""

    alpha: float = 0.1
    beta: float = 0.0
    embedder: str = "toy"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0 or not 0.0 <= self.beta <= 1.0:
            raise ValueError("alpha and beta must lie in [0, 1]")


@dataclass
class ImagePrediction:
    image_id: str
    label: str
    scores: np.ndarray  # (g,), sums to 1
    counts: dict[str, int]  # per non-empty class, from per-box argmax
    confidence: float  # max score entry
    abstained: bool

    @property
    def is_empty(self) -> bool:
        return self.label == EMPTY_CLASS


def merge_image(
    ds: DetectionSet,
    box_scores,
    cfg: PipelineConfig,
    label_space: LabelSpace,
) -> ImagePrediction:
    """Merge the high-confidence box scores of one image.

    ``box_scores`` pairs (detector confidence, score vector), ordered like
    the high-confidence boxes of ``ds`` at ``cfg.alpha``.  Tie-breaking on
    equal aggregate scores picks the lowest class index.
    """
    high, _ = filter_high_conf(ds, cfg.alpha)
    if len(box_scores) != len(high):
        raise LengthMismatch(
            f"{len(box_scores)} score vectors for {len(high)} high-conf boxes "
            f"of '{ds.image_id}'"
        )
    g = len(label_space)
    non_empty = [c for c in label_space.classes if c != EMPTY_CLASS]

    if not box_scores:
        scores = np.zeros(g)
        scores[label_space.empty_index] = 1.0
        return ImagePrediction(
            image_id=ds.image_id,
            label=EMPTY_CLASS,
            scores=scores,
            counts={c: 0 for c in non_empty},
            confidence=1.0,
            abstained=False,
        )

    weights = np.empty(len(box_scores))
    stacked = np.empty((len(box_scores), g))
    for j, (conf, vec) in enumerate(box_scores):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (g,):
            raise LengthMismatch(f"score vector {j} has shape {vec.shape}, expected ({g},)")
        if abs(float(vec.sum()) - 1.0) > SCORE_TOL:
            raise UnnormalizedScore(f"score vector {j} sums to {vec.sum()}")
        weights[j] = conf
        stacked[j] = vec

    total = float(weights.sum())
    if total <= 0.0:
        weights = np.ones_like(weights)  # all-zero confidences: plain mean
        total = float(weights.sum())
    merged = weights @ stacked / total
    label_idx = int(np.argmax(merged))  # argmax returns the lowest index on ties
    counts = {c: 0 for c in non_empty}
    for row in stacked:
        k = int(np.argmax(row))
        name = label_space.classes[k]
        if name != EMPTY_CLASS:
            counts[name] += 1
    confidence = float(merged[label_idx])
    return ImagePrediction(
        image_id=ds.image_id,
        label=label_space.classes[label_idx],
        scores=merged,
        counts=counts,
        confidence=confidence,
        abstained=confidence <= cfg.beta,
    )


@dataclass
class PipelineRuntime:
    """Everything the pipeline needs besides the dataset: providers, crop
    geometry, augmentation, and an optional pixel loader for file-backed
    projects."""

    registry: ProviderRegistry
    crop_config: CropConfig = CropConfig()
    aug_policy: AugmentationPolicy = AugmentationPolicy()
    pixel_loader: object = None  # callable(ImageRecord) -> (h, w, 3) uint8

    def load_pixels(self, dataset: Dataset, record):
        if self.pixel_loader is not None:
            return self.pixel_loader(record)
        if record.file_path is None:
            raise FileNotFoundError(
                f"image '{record.image_id}' has no file_path and no pixel loader is set"
            )
        base = dataset.root or Path(".")
        return load_image(base / record.file_path)


def image_box_crops(
    dataset: Dataset,
    image_id: str,
    alpha: float,
    runtime: PipelineRuntime,
    provider,
) -> list[CropRecord]:
    """Unaugmented crops for the high-confidence boxes of one image.

    Pixel-based providers get real crops; store-based providers get
    embedding-only records carrying just the crop id.
    """
    record = dataset.images[image_id]
    ds = dataset.detections[image_id]
    indexed = iter_high_conf(ds, alpha)
    if not indexed:
        return []
    if provider.requires_pixels:
        pixels = runtime.load_pixels(dataset, record)
        return [
            crop_and_resize(
                pixels,
                det,
                runtime.crop_config,
                image_id=image_id,
                box_index=i,
                label=record.label,
            )
            for i, det in indexed
        ]
    return [
        CropRecord(
            crop_id=CropRecord.make_id(image_id, i, 0),
            image_id=image_id,
            box_index=i,
            detector_confidence=det.confidence,
            label=record.label,
        )
        for i, det in indexed
    ]


def predict_image(
    dataset: Dataset,
    image_id: str,
    head: HeadModel,
    cfg: PipelineConfig,
    runtime: PipelineRuntime,
) -> ImagePrediction:
    provider = runtime.registry.get(cfg.embedder)
    crops = image_box_crops(dataset, image_id, cfg.alpha, runtime, provider)
    ds = dataset.detections[image_id]
    if not crops:
        return merge_image(ds, [], cfg, dataset.label_space)
    emb = provider.embed_batch(crops)
    scores = predict_scores(head, emb)
    box_scores = [(crop.detector_confidence, scores[j]) for j, crop in enumerate(crops)]
    return merge_image(ds, box_scores, cfg, dataset.label_space)


def predict_dataset(
    dataset: Dataset,
    head: HeadModel,
    cfg: PipelineConfig,
    runtime: PipelineRuntime,
    image_ids=None,
) -> list[ImagePrediction]:
    """One merged prediction per image, ordered by image_id.

    Inference uses unaugmented crops only (aug index 0).
    """
    ids = sorted(dataset.images if image_ids is None else image_ids)
    return [predict_image(dataset, i, head, cfg, runtime) for i in ids]


def predictions_to_csv(predictions, label_space: LabelSpace, path) -> None:
    """Export predictions: one row per image, scores and counts per class."""
    non_empty = [c for c in label_space.classes if c != EMPTY_CLASS]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["image_id", "label", "confidence", "abstained"]
            + [f"score_{c}" for c in label_space.classes]
            + [f"count_{c}" for c in non_empty]
        )
        for pred in predictions:
            writer.writerow(
                [pred.image_id, pred.label, repr(pred.confidence), str(pred.abstained).lower()]
                + [repr(float(v)) for v in pred.scores]
                + [pred.counts[c] for c in non_empty]
            )
