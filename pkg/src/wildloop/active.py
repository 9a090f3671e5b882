"""The human-in-the-loop engine: query batches, take labels, retrain.

The loop keeps three disjoint image pools: labeled, unlabeled, and a frozen
test set that is evaluated every iteration and never queried.  Batch
selection ranks unlabeled images by the softmax entropy of their merged
scores (after a random first batch); labels move images from the unlabeled
to the labeled pool; each iteration retrains (optionally retunes) and
appends a performance record, so the operator can stop when the curve is
good enough and predict whatever remains.

Note that images ruled empty by the detector (no high-confidence box) have
one-hot merged scores and therefore zero entropy: entropy acquisition never
queries them, which deliberately trusts the detector's verdict on empties.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import HeadModel, TrainConfig, cold_start, save_checkpoint, train, warm_start
from .errors import (
    EmptyPool,
    LabelConflict,
    LengthMismatch,
    NoLabels,
    NoModel,
    NotQueriedOrUnknown,
    UnknownLabel,
    UnnormalizedScore,
)
from .ingest import Dataset, LabelSpace
from .merge import ImagePrediction, PipelineConfig, PipelineRuntime, predict_dataset
from .metrics import MetricReport, confusion, report
from .tuning import HyperGrid, _allocate_largest_remainder, make_split, training_crops, tune

ACQUISITIONS = ("entropy", "random")
START_MODES = ("cold", "warm")


@dataclass
class IterationRecord:
    iteration: int
    queried: list[str]
    lam: tuple[str, float]
    labeled_count: int
    test_report: MetricReport
    checkpoint: str | None = None

    @property
    def test_accuracy(self) -> float:
        return self.test_report.accuracy

    @property
    def test_weighted_f1(self) -> float:
        return self.test_report.weighted_f1


@dataclass
class ALState:
    label_space: LabelSpace
    labeled_pool: set[str]
    unlabeled_pool: set[str]
    frozen_test: set[str]
    labels: dict[str, str]
    iteration: int = 0
    batch_size: int = 128
    stratify_by_station: bool = False
    acquisition: str = "entropy"
    start_mode: str = "cold"
    skip_tuning: bool = False
    seed: int = 0
    history: list[IterationRecord] = field(default_factory=list)
    queued: list[str] = field(default_factory=list)
    newly_labeled: list[str] = field(default_factory=list)
    last_lambda: tuple[str, float] | None = None
    last_head: HeadModel | None = None

    def check_pools(self) -> None:
        if self.labeled_pool & self.unlabeled_pool:
            raise AssertionError("labeled and unlabeled pools overlap")
        if self.frozen_test & (self.labeled_pool | self.unlabeled_pool):
            raise AssertionError("frozen test overlaps a pool")


@dataclass
class ALDeps:
    """Static context for the loop: the dataset (labels supplied by the
    state, not the dataset), pipeline runtime, and training settings."""

    dataset: Dataset
    runtime: PipelineRuntime
    default_lambda: tuple[str, float]
    grid: HyperGrid | None = None
    train_config: TrainConfig = TrainConfig()
    beta: float = 0.0
    checkpoint_dir: Path | None = None
    augment_k: int = 0


def select_test_ids(
    dataset: Dataset,
    candidate_labels: dict[str, str],
    fraction: float = 0.15,
    seed: int = 0,
    stratify: bool = True,
) -> list[str]:
    """Stratified random sample of labeled image ids for the frozen test set."""
    ids = sorted(candidate_labels)
    rng = np.random.default_rng(seed)
    if not stratify:
        size = max(1, int(round(fraction * len(ids))))
        return sorted(rng.choice(ids, size=min(size, len(ids)), replace=False))
    by_station: dict[str, list[str]] = {}
    for image_id in ids:
        by_station.setdefault(dataset.images[image_id].station_id, []).append(image_id)
    chosen = []
    for station in sorted(by_station):
        pool = sorted(by_station[station])
        rng.shuffle(pool)
        take = int(round(fraction * len(pool)))
        chosen.extend(pool[:take])
    return sorted(chosen)


def init_state(
    dataset: Dataset,
    *,
    initial_labels: dict[str, str] | None = None,
    test_ids=None,
    test_fraction: float = 0.15,
    batch_size: int = 128,
    stratify_by_station: bool = False,
    acquisition: str = "entropy",
    start_mode: str = "cold",
    skip_tuning: bool = False,
    seed: int = 0,
) -> ALState:
    """Build the starting loop state.

    ``initial_labels`` defaults to the labels already on the dataset.  The
    frozen test set is taken from the labeled images (stratified sample at
    ``test_fraction`` unless explicit ``test_ids`` are given) and must be
    fully labeled.
    """
    if acquisition not in ACQUISITIONS:
        raise ValueError(f"acquisition must be one of {ACQUISITIONS}")
    if start_mode not in START_MODES:
        raise ValueError(f"start_mode must be one of {START_MODES}")
    if initial_labels is None:
        initial_labels = {i: r.label for i, r in dataset.images.items() if r.label is not None}
    for image_id, label in initial_labels.items():
        if image_id not in dataset.images:
            raise NotQueriedOrUnknown(f"label for unknown image '{image_id}'")
        if label not in dataset.label_space:
            raise UnknownLabel(f"label '{label}' not in label space")

    if test_ids is None:
        test = set(select_test_ids(dataset, initial_labels, test_fraction, seed))
    else:
        test = set(test_ids)
        missing = test - set(initial_labels)
        if missing:
            raise NoLabels(f"{len(missing)} frozen-test images lack labels")
    labeled = set(initial_labels) - test
    unlabeled = set(dataset.images) - labeled - test

    state = ALState(
        label_space=dataset.label_space,
        labeled_pool=labeled,
        unlabeled_pool=unlabeled,
        frozen_test=test,
        labels=dict(initial_labels),
        batch_size=batch_size,
        stratify_by_station=stratify_by_station,
        acquisition=acquisition,
        start_mode=start_mode,
        skip_tuning=skip_tuning,
        seed=seed,
    )
    state.check_pools()
    return state


def acquisition_score(pred: ImagePrediction) -> float:
    """Softmax entropy of the merged scores, with 0 * ln 0 = 0."""
    scores = np.asarray(pred.scores, dtype=np.float64)
    if abs(float(scores.sum()) - 1.0) > 1e-6 or (scores < 0).any():
        raise UnnormalizedScore(f"scores of '{pred.image_id}' are not a distribution")
    positive = scores[scores > 0]
    return float(-(positive * np.log(positive)).sum())


def select_batch(
    state: ALState,
    predictions,
    batch_size: int | None = None,
    dataset: Dataset | None = None,
) -> list[str]:
    """Pick the next batch to label from the unlabeled pool.

    Iteration 0 (no model yet) and random mode draw a seeded uniform sample.
    Entropy mode takes the top-B entropies, ties broken by ascending
    image_id; with station stratification (requires ``dataset`` for the
    station ids) each station gets a quota proportional to its pool share
    (largest remainder) and unfilled quotas fall back to the global entropy
    ranking.
    """
    b = batch_size or state.batch_size
    if b < 1:
        raise ValueError("batch size must be >= 1")
    if not state.unlabeled_pool:
        raise EmptyPool("no unlabeled images left")
    pool = sorted(state.unlabeled_pool)
    b = min(b, len(pool))

    if state.iteration == 0 or state.acquisition == "random":
        rng = np.random.default_rng([state.seed, state.iteration])
        return sorted(rng.choice(pool, size=b, replace=False).tolist())

    by_id = {p.image_id: p for p in predictions}
    missing = [i for i in pool if i not in by_id]
    if missing:
        raise LengthMismatch(f"predictions missing for {len(missing)} pool images")
    entropy = {i: acquisition_score(by_id[i]) for i in pool}

    if not state.stratify_by_station:
        return sorted(pool, key=lambda i: (-entropy[i], i))[:b]

    if dataset is None:
        raise ValueError("stratified selection needs the dataset for station ids")
    by_station: dict[str, list[str]] = {}
    for image_id in pool:
        by_station.setdefault(dataset.images[image_id].station_id, []).append(image_id)
    stations = sorted(by_station)
    total = len(pool)
    fractions = [len(by_station[s]) / total for s in stations]
    quotas = _allocate_largest_remainder(b, fractions, [0.0] * len(stations))

    chosen: list[str] = []
    for station, quota in zip(stations, quotas):
        ranked = sorted(by_station[station], key=lambda i: (-entropy[i], i))
        chosen.extend(ranked[: min(quota, len(ranked))])
    shortfall = b - len(chosen)
    if shortfall > 0:
        taken = set(chosen)
        rest = sorted((i for i in pool if i not in taken), key=lambda i: (-entropy[i], i))
        chosen.extend(rest[:shortfall])
    return chosen


def submit_labels(state: ALState, pairs) -> ALState:
    """Record human labels for unlabeled images.

    Validates the whole batch before applying any of it.  Re-submitting an
    identical label is a no-op; a conflicting re-label is rejected.
    """
    pairs = list(pairs)
    for image_id, label in pairs:
        if label not in state.label_space:
            raise UnknownLabel(f"label '{label}' not in label space")
        if image_id in state.labeled_pool:
            if state.labels.get(image_id) != label:
                raise LabelConflict(
                    f"'{image_id}' already labeled '{state.labels.get(image_id)}'"
                )
        elif image_id not in state.unlabeled_pool:
            raise NotQueriedOrUnknown(f"'{image_id}' is not in the unlabeled pool")
    for image_id, label in pairs:
        if image_id in state.unlabeled_pool:
            state.unlabeled_pool.remove(image_id)
            state.labeled_pool.add(image_id)
            state.labels[image_id] = label
            state.newly_labeled.append(image_id)
            if image_id in state.queued:
                state.queued.remove(image_id)
    state.check_pools()
    return state


def _labeled_view(state: ALState, deps: ALDeps, ids) -> Dataset:
    return deps.dataset.with_labels({i: state.labels[i] for i in ids})


def iterate(state: ALState, deps: ALDeps) -> tuple[ALState, IterationRecord]:
    """One model pass: choose hyperparameters, train, score the frozen test.

    With ``skip_tuning`` the previous (or default) combination is reused;
    otherwise a full grid search runs on an internal split of the labeled
    pool.  ``start_mode`` decides between a fresh head and warm-starting
    from the previous iteration's parameters.
    """
    if not state.labeled_pool:
        raise NoLabels("cannot iterate with an empty labeled pool")
    test_before = set(state.frozen_test)

    train_view = _labeled_view(state, deps, state.labeled_pool)
    iteration_seed = state.seed * 100003 + state.iteration
    cfg = dataclasses.replace(deps.train_config, seed=iteration_seed)
    if state.skip_tuning or deps.grid is None:
        lam = state.last_lambda or deps.default_lambda
    else:
        split = make_split(train_view, stratify_by_station=True, seed=iteration_seed)
        best, _ = tune(train_view, split, deps.grid, deps.runtime, cfg, deps.beta, deps.augment_k)
        lam = best.lam

    embedder, alpha = lam
    provider = deps.runtime.registry.get(embedder)
    crops = training_crops(
        train_view, state.labeled_pool, alpha, deps.runtime, provider, deps.augment_k
    )
    if not crops:
        raise NoLabels(f"no high-confidence crops among labeled images at alpha={alpha}")
    X = provider.embed_batch(crops)
    labels = [c.label for c in crops]

    if state.start_mode == "warm" and state.last_head is not None:
        head = warm_start(state.last_head, deps.dataset.label_space, provider.ident.dim)
        head.train_config = cfg
    else:
        head = cold_start(deps.dataset.label_space, provider.ident.dim, cfg)
    head, _ = train(head, X, labels)

    test_view = _labeled_view(state, deps, state.frozen_test)
    pipeline_cfg = PipelineConfig(alpha=alpha, beta=deps.beta, embedder=embedder)
    preds = predict_dataset(test_view, head, pipeline_cfg, deps.runtime, sorted(state.frozen_test))
    test_report = report(
        confusion(
            [test_view.images[p.image_id].label for p in preds],
            [p.label for p in preds],
            deps.dataset.label_space,
        )
    )

    checkpoint = None
    if deps.checkpoint_dir is not None:
        deps.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        path = Path(deps.checkpoint_dir) / f"ckpt_{state.iteration:04d}.bin"
        save_checkpoint(head, path)
        checkpoint = str(path)

    record = IterationRecord(
        iteration=state.iteration,
        queried=list(state.newly_labeled),
        lam=lam,
        labeled_count=len(state.labeled_pool),
        test_report=test_report,
        checkpoint=checkpoint,
    )
    state.history.append(record)
    state.iteration += 1
    state.newly_labeled = []
    state.last_lambda = lam
    state.last_head = head

    if state.frozen_test != test_before:
        raise AssertionError("frozen test set changed during iterate")
    state.check_pools()
    return state, record


def finalize(state: ALState, deps: ALDeps) -> list[ImagePrediction]:
    """Predict every remaining unlabeled image with the last model."""
    if state.last_head is None or state.last_lambda is None:
        raise NoModel("run at least one iteration before finalizing")
    embedder, alpha = state.last_lambda
    cfg = PipelineConfig(alpha=alpha, beta=deps.beta, embedder=embedder)
    return predict_dataset(
        deps.dataset, state.last_head, cfg, deps.runtime, sorted(state.unlabeled_pool)
    )


def history_rows(state: ALState) -> list[dict]:
    """Per-iteration curve data (labeled count vs. accuracy / weighted F1)."""
    return [
        {
            "iteration": rec.iteration,
            "labeled_count": rec.labeled_count,
            "accuracy": rec.test_accuracy,
            "weighted_f1": rec.test_weighted_f1,
        }
        for rec in state.history
    ]


def history_to_csv(state: ALState, path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "labeled_count", "accuracy", "weighted_f1"])
        for row in history_rows(state):
            writer.writerow(
                [row["iteration"], row["labeled_count"], repr(row["accuracy"]), repr(row["weighted_f1"])]
            )
