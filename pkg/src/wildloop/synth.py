"""Synthetic camera-trap projects with known ground truth.

Generates a full project — images, stations, labels, detector output, and
box embeddings — from a compact spec, deterministically for a fixed seed.
Class-conditional embeddings are Gaussian clusters around random unit
directions scaled by ``cluster_separation``; the background/empty cluster
sits at the origin, so the closest pair of means is ``cluster_separation``
apart and clusters are linearly separable with overwhelming probability
(error well under 1%) when ``cluster_spread <= cluster_separation / 6``.  Detector confidences follow Beta distributions:
concentrated high for real animal boxes, concentrated low for the spurious
boxes that sometimes appear on empty images.

A parallel set of whole-image features (the animal signal diluted into
background clutter) supports baselines that skip object detection: see
``full_frame_view``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import EmbedderId, EmbeddingStore, write_store
from .errors import InvalidSpec
from .ingest import (
    CATEGORY_ANIMAL,
    EMPTY_CLASS,
    Dataset,
    Detection,
    DetectionSet,
    ImageRecord,
    LabelSpace,
    write_detections,
    write_labels,
    write_manifest,
)


@dataclass(frozen=True)
class SynthSpec:
    n_images: int = 1000
    n_stations: int = 4
    class_proportions: dict = field(
        default_factory=lambda: {
            EMPTY_CLASS: 0.4,
            "red_fox": 0.15,
            "roe_deer": 0.15,
            "wild_boar": 0.15,
            "european_hare": 0.15,
        }
    )
    embedding_dim: int = 16
    cluster_separation: float = 4.0
    cluster_spread: float = 1.0
    clutter_spread: float = 1.0
    max_boxes_per_image: int = 3
    true_conf_beta: tuple[float, float] = (6.0, 2.0)
    spurious_conf_beta: tuple[float, float] = (2.0, 8.0)
    spurious_box_prob: float = 0.3
    # Fraction of the animal cluster signal present in whole-image features;
    # the rest is background clutter.
    whole_image_signal: float = 0.35
    provider_name: str = "synth"

    def validate(self) -> None:
        if self.n_images <= 0 or self.n_stations <= 0:
            raise InvalidSpec("n_images and n_stations must be positive")
        if self.embedding_dim < 2:
            raise InvalidSpec("embedding_dim must be >= 2")
        if self.max_boxes_per_image < 1:
            raise InvalidSpec("max_boxes_per_image must be >= 1")
        if EMPTY_CLASS not in self.class_proportions:
            raise InvalidSpec(f"class proportions must include '{EMPTY_CLASS}'")
        if any(p < 0 for p in self.class_proportions.values()):
            raise InvalidSpec("class proportions must be non-negative")
        total = sum(self.class_proportions.values())
        if abs(total - 1.0) > 1e-9:
            raise InvalidSpec(f"class proportions sum to {total}, expected 1")
        if not 0.0 <= self.spurious_box_prob <= 1.0:
            raise InvalidSpec("spurious_box_prob must be in [0, 1]")
        if not 0.0 <= self.whole_image_signal <= 1.0:
            raise InvalidSpec("whole_image_signal must be in [0, 1]")


@dataclass
class SynthProject:
    """A generated project plus the stores backing its embeddings."""

    dataset: Dataset
    box_store: EmbeddingStore
    whole_store: EmbeddingStore
    class_means: dict

    def write(self, out_dir) -> None:
        """Emit project files in the external formats (byte-stable)."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        images = [self.dataset.images[i] for i in sorted(self.dataset.images)]
        write_manifest(out / "manifest.csv", images)
        write_labels(
            out / "labels.csv",
            {r.image_id: r.label for r in images if r.label is not None},
        )
        write_detections(out / "detections.json", self.dataset.detections)
        emb_dir = out / "embeddings"
        emb_dir.mkdir(exist_ok=True)
        write_store(self.box_store, emb_dir / f"{self.box_store.provider.name}.emb")
        write_store(self.whole_store, emb_dir / f"{self.whole_store.provider.name}.emb")


def _random_box(rng) -> tuple[float, float, float, float]:
    w = float(rng.uniform(0.15, 0.45))
    h = float(rng.uniform(0.15, 0.45))
    x = float(rng.uniform(0.0, 1.0 - w))
    y = float(rng.uniform(0.0, 1.0 - h))
    return (x, y, w, h)


def synthesize(spec: SynthSpec, seed: int) -> SynthProject:
    """Generate the full synthetic project for (spec, seed)."""
    spec.validate()
    rng = np.random.default_rng(seed)
    classes = tuple(spec.class_proportions)
    label_space = LabelSpace(classes)
    dim = spec.embedding_dim

    # Class clusters: random unit directions scaled to the separation radius.
    # The clutter cluster for spurious/background content sits at the origin.
    means = {}
    for name in classes:
        if name == EMPTY_CLASS:
            means[name] = np.zeros(dim)
        else:
            v = rng.standard_normal(dim)
            means[name] = spec.cluster_separation * v / np.linalg.norm(v)

    proportions = np.array([spec.class_proportions[c] for c in classes])
    n_digits = len(str(max(spec.n_images - 1, 1)))

    images: dict[str, ImageRecord] = {}
    detections: dict[str, DetectionSet] = {}
    box_ids, box_rows = [], []
    whole_ids, whole_rows = [], []

    for i in range(spec.n_images):
        image_id = f"img{i:0{n_digits}d}"
        station = f"st{int(rng.integers(spec.n_stations)):02d}"
        label = classes[int(rng.choice(len(classes), p=proportions))]
        images[image_id] = ImageRecord(image_id=image_id, station_id=station, label=label)

        dets = []
        vectors = []
        clutter = spec.clutter_spread * rng.standard_normal(dim)
        if label == EMPTY_CLASS:
            if rng.random() < spec.spurious_box_prob:
                a, b = spec.spurious_conf_beta
                dets.append(
                    Detection(_random_box(rng), float(rng.beta(a, b)), CATEGORY_ANIMAL)
                )
                vectors.append(clutter + spec.clutter_spread * rng.standard_normal(dim))
            signal = np.zeros(dim)
        else:
            n_boxes = int(rng.integers(1, spec.max_boxes_per_image + 1))
            a, b = spec.true_conf_beta
            for _ in range(n_boxes):
                dets.append(
                    Detection(_random_box(rng), float(rng.beta(a, b)), CATEGORY_ANIMAL)
                )
                vectors.append(means[label] + spec.cluster_spread * rng.standard_normal(dim))
            signal = means[label] + spec.cluster_spread * rng.standard_normal(dim)

        detections[image_id] = DetectionSet(image_id, tuple(dets))
        for j, vec in enumerate(vectors):
            box_ids.append(f"{image_id}#{j}#0")
            box_rows.append(vec)
        whole_ids.append(f"{image_id}#0#0")
        whole_rows.append(
            spec.whole_image_signal * signal + (1.0 - spec.whole_image_signal) * clutter
        )

    box_data = np.asarray(box_rows, dtype=np.float32).reshape(len(box_ids), dim)
    whole_data = np.asarray(whole_rows, dtype=np.float32).reshape(len(whole_ids), dim)
    box_store = EmbeddingStore(EmbedderId(spec.provider_name, dim), box_ids, box_data)
    whole_store = EmbeddingStore(
        EmbedderId(f"{spec.provider_name}_whole", dim), whole_ids, whole_data
    )
    dataset = Dataset(images=images, detections=detections, label_space=label_space)
    return SynthProject(dataset, box_store, whole_store, means)


def generate_synthetic_project(spec: SynthSpec, seed: int) -> tuple[Dataset, EmbeddingStore]:
    """Dataset plus box embeddings for (spec, seed); see ``synthesize``."""
    project = synthesize(spec, seed)
    return project.dataset, project.box_store


def full_frame_view(dataset: Dataset) -> Dataset:
    """Dataset variant where every image has one full-frame box at conf 1.0.

    Pairing this with a whole-image embedding store turns the regular
    pipeline into an image-classification-only baseline (no detector).
    """
    detections = {
        image_id: DetectionSet(
            image_id, (Detection((0.0, 0.0, 1.0, 1.0), 1.0, CATEGORY_ANIMAL),)
        )
        for image_id in dataset.images
    }
    return Dataset(dict(dataset.images), detections, dataset.label_space, dataset.root)
