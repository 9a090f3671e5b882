"""Resampling splits and grid search over (embedder, detector threshold).

Splits cover the labeled images only; within each station a seeded shuffle
feeds a largest-remainder allocation so every station lands within one image
of the target fractions.  Grid points are trained on the train part, scored
on the val part at image level, and the best combination wins with ties
broken toward the lower threshold, then the earlier embedder.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .classifier import HeadModel, TrainConfig, cold_start, predict_scores, train, warm_start
from .errors import EmptyDataset, InvalidFractions, TooFewStations
from .ingest import EMPTY_CLASS, Dataset
from .merge import PipelineConfig, PipelineRuntime, image_box_crops, predict_dataset
from .metrics import MetricReport, confusion, report

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")

TUNING_METRICS = ("recall", "precision", "f1", "accuracy")


@dataclass
class SplitAssignment:
    mapping: dict[str, str]  # image_id -> train|val|test
    fractions: tuple[float, float, float]
    stratify_by_station: bool
    seed: int

    def part(self, name: str) -> list[str]:
        return [i for i, s in self.mapping.items() if s == name]


@dataclass(frozen=True)
class HyperGrid:
    alphas: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    embedders: tuple[str, ...] = ("toy",)
    metric: str = "f1"

    def __post_init__(self):
        if not self.alphas or not self.embedders:
            raise ValueError("grid needs at least one alpha and one embedder")
        if any(not 0.0 <= a <= 1.0 for a in self.alphas):
            raise ValueError("alphas must lie in [0, 1]")
        if self.metric not in TUNING_METRICS:
            raise ValueError(f"metric must be one of {TUNING_METRICS}")


@dataclass
class TuningRecord:
    embedder: str
    alpha: float
    val_metric: float
    head: HeadModel | None = None
    val_report: MetricReport | None = None
    degenerate: bool = False

    @property
    def lam(self) -> tuple[str, float]:
        return (self.embedder, self.alpha)


def _allocate_largest_remainder(n: int, fractions, deficits) -> list[int]:
    """Integer allocation of n items to len(fractions) buckets.

    Floors first; leftovers go to the largest fractional remainders, ties
    resolved toward the bucket with the largest running global deficit, then
    the earliest bucket.
    """
    targets = [n * f for f in fractions]
    counts = [int(np.floor(t)) for t in targets]
    leftover = n - sum(counts)
    remainders = [t - c for t, c in zip(targets, counts)]
    order = sorted(
        range(len(fractions)),
        key=lambda i: (-remainders[i], -(deficits[i] + remainders[i]), i),
    )
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def make_split(
    dataset: Dataset,
    fractions=(0.70, 0.15, 0.15),
    stratify_by_station: bool = True,
    seed: int = 0,
) -> SplitAssignment:
    """Partition the labeled images into train/val/test."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise InvalidFractions(f"need three positive fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidFractions(f"fractions sum to {sum(fractions)}, expected 1")
    labeled = dataset.labeled_ids()
    if not labeled:
        raise EmptyDataset("no labeled images to split")

    rng = np.random.default_rng(seed)
    mapping: dict[str, str] = {}
    if stratify_by_station:
        by_station: dict[str, list[str]] = {}
        for image_id in labeled:
            by_station.setdefault(dataset.images[image_id].station_id, []).append(image_id)
        deficits = [0.0, 0.0, 0.0]
        assigned = [0, 0, 0]
        seen = 0
        for station in sorted(by_station):
            ids = sorted(by_station[station])
            rng.shuffle(ids)
            seen += len(ids)
            counts = _allocate_largest_remainder(len(ids), fractions, deficits)
            pos = 0
            for part, count in zip(SPLIT_NAMES, counts):
                for image_id in ids[pos : pos + count]:
                    mapping[image_id] = part
                pos += count
            for i in range(3):
                assigned[i] += counts[i]
                deficits[i] = seen * fractions[i] - assigned[i]
    else:
        ids = sorted(labeled)
        rng.shuffle(ids)
        counts = _allocate_largest_remainder(len(ids), fractions, [0.0, 0.0, 0.0])
        pos = 0
        for part, count in zip(SPLIT_NAMES, counts):
            for image_id in ids[pos : pos + count]:
                mapping[image_id] = part
            pos += count
    return SplitAssignment(mapping, fractions, stratify_by_station, seed)


def make_station_partition(dataset: Dataset, fraction_in_sample: float, seed: int = 0):
    """Station-disjoint (in-sample, out-of-sample) split.

    Returns two sorted station lists; no station appears in both, so no
    image of an out-of-sample station can leak in-sample.
    """
    stations = dataset.stations()
    if len(stations) < 2:
        raise TooFewStations(f"need >= 2 stations, have {len(stations)}")
    rng = np.random.default_rng(seed)
    shuffled = list(stations)
    rng.shuffle(shuffled)
    k = int(np.floor(fraction_in_sample * len(stations)))
    k = min(max(k, 1), len(stations) - 1)
    return sorted(shuffled[:k]), sorted(shuffled[k:])


def training_crops(
    dataset: Dataset,
    image_ids,
    alpha: float,
    runtime: PipelineRuntime,
    provider,
    augment_k: int = 0,
):
    """Labeled high-confidence crops (plus optional augmented variants) for
    the given images; crops inherit the image label."""
    from .imaging import augment

    crops = []
    for image_id in sorted(image_ids):
        record = dataset.images[image_id]
        if record.label is None:
            continue
        base = image_box_crops(dataset, image_id, alpha, runtime, provider)
        crops.extend(base)
        if augment_k > 0 and provider.requires_pixels:
            for crop in base:
                crops.extend(augment(crop, runtime.aug_policy, augment_k))
    return crops


def _train_grid_point(
    dataset: Dataset,
    train_ids,
    embedder: str,
    alpha: float,
    runtime: PipelineRuntime,
    train_config: TrainConfig,
    base_head: HeadModel | None = None,
    augment_k: int = 0,
):
    """Train one head for (embedder, alpha); None when the point is
    degenerate (no non-empty training crops)."""
    provider = runtime.registry.get(embedder)
    crops = training_crops(dataset, train_ids, alpha, runtime, provider, augment_k)
    if not any(c.label != EMPTY_CLASS for c in crops):
        return None
    X = provider.embed_batch(crops)
    labels = [c.label for c in crops]
    if base_head is not None:
        head = warm_start(base_head, dataset.label_space, provider.ident.dim)
        head.train_config = train_config
    else:
        head = cold_start(dataset.label_space, provider.ident.dim, train_config)
    trained, _ = train(head, X, labels)
    return trained


def tune(
    dataset: Dataset,
    split: SplitAssignment,
    grid: HyperGrid,
    runtime: PipelineRuntime,
    train_config: TrainConfig = TrainConfig(),
    beta: float = 0.0,
    augment_k: int = 0,
):
    """Grid search; returns (best TuningRecord, all TuningRecords).

    Degenerate grid points are recorded with metric -inf instead of failing
    the whole search.  The winner maximizes the grid metric on the val part;
    exact ties prefer the lower alpha, then the earlier embedder.
    """
    train_ids = split.part("train")
    val_ids = split.part("val")
    if not train_ids or not val_ids:
        raise EmptyDataset("tuning needs non-empty train and val parts")
    records: list[TuningRecord] = []
    for embedder in grid.embedders:
        for alpha in grid.alphas:
            head = _train_grid_point(
                dataset, train_ids, embedder, alpha, runtime, train_config, augment_k=augment_k
            )
            if head is None:
                logger.warning("degenerate grid point (%s, %.2f)", embedder, alpha)
                records.append(TuningRecord(embedder, alpha, float("-inf"), degenerate=True))
                continue
            cfg = PipelineConfig(alpha=alpha, beta=beta, embedder=embedder)
            preds = predict_dataset(dataset, head, cfg, runtime, val_ids)
            cm = confusion(
                [dataset.images[p.image_id].label for p in preds],
                [p.label for p in preds],
                dataset.label_space,
            )
            rep = report(cm)
            records.append(
                TuningRecord(embedder, alpha, rep.value(grid.metric), head=head, val_report=rep)
            )
    return select_best(records, grid), records


def select_best(records, grid: HyperGrid) -> TuningRecord:
    """Argmax over tuning records; ties prefer lower alpha, then the
    embedder listed earlier in the grid."""
    embed_rank = {name: i for i, name in enumerate(grid.embedders)}
    return max(records, key=lambda r: (r.val_metric, -r.alpha, -embed_rank[r.embedder]))


def evaluate(
    dataset: Dataset,
    image_ids,
    lam: tuple[str, float],
    head: HeadModel,
    runtime: PipelineRuntime,
    beta: float = 0.0,
):
    """Box-level and image-level metric reports for one trained head.

    Box level scores each high-confidence crop against the label it inherits
    from its image; image level scores the merged predictions.  Abstained
    predictions are excluded from the image-level confusion.
    """
    embedder, alpha = lam
    provider = runtime.registry.get(embedder)
    labeled = [i for i in image_ids if dataset.images[i].label is not None]

    crops = training_crops(dataset, labeled, alpha, runtime, provider, augment_k=0)
    bb_report = None
    if crops:
        scores = predict_scores(head, provider.embed_batch(crops))
        pred_labels = [
            dataset.label_space.classes[int(np.argmax(row))] for row in scores
        ]
        bb_report = report(
            confusion([c.label for c in crops], pred_labels, dataset.label_space)
        )

    cfg = PipelineConfig(alpha=alpha, beta=beta, embedder=embedder)
    preds = predict_dataset(dataset, head, cfg, runtime, labeled)
    kept = [p for p in preds if not p.abstained]
    image_report = report(
        confusion(
            [dataset.images[p.image_id].label for p in kept],
            [p.label for p in kept],
            dataset.label_space,
        )
    )
    return bb_report, image_report


def tuning_records_to_csv(records, path) -> None:
    """Ranking CSV, best metric first: confidence,architecture,metric."""
    ordered = sorted(records, key=lambda r: r.val_metric, reverse=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["confidence", "architecture", "metric"])
        for rec in ordered:
            writer.writerow([rec.alpha, rec.embedder, repr(rec.val_metric)])
