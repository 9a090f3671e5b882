"""Durable project state on disk.

A project is a single directory: a human-readable ``project.json`` manifest,
the acquired labels and iteration history as CSV, binary checkpoints and
embedding stores in subdirectories.  Writes are atomic (temp file + rename)
and a lock file enforces one writer per project.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .active import ALState, IterationRecord
from .classifier import TrainConfig, load_checkpoint, save_checkpoint
from .embedding import default_registry, read_store, StoreEmbedder
from .errors import CorruptState, IoFailure, MissingFile, ProjectLocked, VersionMismatch
from .imaging import AugmentationPolicy, CropConfig
from .ingest import Dataset, LabelSpace, load_labels, load_project, write_labels
from .merge import PipelineConfig, PipelineRuntime
from .metrics import ClassMetrics, MetricReport
from .tuning import HyperGrid

FORMAT_VERSION = 1

PROJECT_FILE = "project.json"
LABELS_FILE = "labels.csv"
HISTORY_FILE = "history.csv"
LOCK_FILE = "project.lock"
CHECKPOINT_DIR = "checkpoints"
EMBEDDING_DIR = "embeddings"
LAST_HEAD = "last_head.bin"


@dataclass
class ProjectState:
    root: Path
    label_space: LabelSpace
    manifest_path: str = "manifest.csv"
    detections_path: str = "detections.json"
    embedding_paths: list[str] = field(default_factory=list)
    pipeline: PipelineConfig = PipelineConfig()
    grid: HyperGrid = HyperGrid()
    train_config: TrainConfig = TrainConfig()
    crop_config: CropConfig = CropConfig()
    aug_policy: AugmentationPolicy = AugmentationPolicy()
    al: ALState | None = None
    version: int = FORMAT_VERSION

    # --- glue -----------------------------------------------------------

    def load_dataset(self) -> Dataset:
        dataset = load_project(
            self.root / self.manifest_path,
            None,
            self.root / self.detections_path,
            self.label_space,
        )
        if self.al is not None:
            dataset = dataset.with_labels(self.al.labels)
        return dataset

    def build_runtime(self) -> PipelineRuntime:
        registry = default_registry()
        for rel in self.embedding_paths:
            store = read_store(self.root / rel)
            registry.register(StoreEmbedder(store))
        return PipelineRuntime(
            registry=registry, crop_config=self.crop_config, aug_policy=self.aug_policy
        )


# --- serialization -----------------------------------------------------------


def _report_to_dict(rep: MetricReport) -> dict:
    return {
        "accuracy": rep.accuracy,
        "weighted_precision": rep.weighted_precision,
        "weighted_recall": rep.weighted_recall,
        "weighted_f1": rep.weighted_f1,
        "per_class": {
            name: [m.precision, m.recall, m.f1, m.support] for name, m in rep.per_class.items()
        },
    }


def _report_from_dict(d: dict) -> MetricReport:
    return MetricReport(
        accuracy=d["accuracy"],
        per_class={
            name: ClassMetrics(v[0], v[1], v[2], int(v[3])) for name, v in d["per_class"].items()
        },
        weighted_precision=d["weighted_precision"],
        weighted_recall=d["weighted_recall"],
        weighted_f1=d["weighted_f1"],
    )


def _record_to_dict(rec: IterationRecord) -> dict:
    return {
        "iteration": rec.iteration,
        "queried": rec.queried,
        "lambda": [rec.lam[0], rec.lam[1]],
        "labeled_count": rec.labeled_count,
        "test_report": _report_to_dict(rec.test_report),
        "checkpoint": rec.checkpoint,
    }


def _record_from_dict(d: dict) -> IterationRecord:
    return IterationRecord(
        iteration=int(d["iteration"]),
        queried=list(d["queried"]),
        lam=(d["lambda"][0], float(d["lambda"][1])),
        labeled_count=int(d["labeled_count"]),
        test_report=_report_from_dict(d["test_report"]),
        checkpoint=d.get("checkpoint"),
    )


def _al_to_dict(al: ALState) -> dict:
    return {
        "iteration": al.iteration,
        "labeled_pool": sorted(al.labeled_pool),
        "unlabeled_pool": sorted(al.unlabeled_pool),
        "frozen_test": sorted(al.frozen_test),
        "batch_size": al.batch_size,
        "stratify_by_station": al.stratify_by_station,
        "acquisition": al.acquisition,
        "start_mode": al.start_mode,
        "skip_tuning": al.skip_tuning,
        "seed": al.seed,
        "queued": al.queued,
        "newly_labeled": al.newly_labeled,
        "last_lambda": list(al.last_lambda) if al.last_lambda else None,
        "history": [_record_to_dict(r) for r in al.history],
    }


def _al_from_dict(d: dict, label_space: LabelSpace, labels: dict) -> ALState:
    lam = d.get("last_lambda")
    return ALState(
        label_space=label_space,
        labeled_pool=set(d["labeled_pool"]),
        unlabeled_pool=set(d["unlabeled_pool"]),
        frozen_test=set(d["frozen_test"]),
        labels=labels,
        iteration=int(d["iteration"]),
        batch_size=int(d["batch_size"]),
        stratify_by_station=bool(d["stratify_by_station"]),
        acquisition=d["acquisition"],
        start_mode=d["start_mode"],
        skip_tuning=bool(d["skip_tuning"]),
        seed=int(d["seed"]),
        history=[_record_from_dict(r) for r in d.get("history", [])],
        queued=list(d.get("queued", [])),
        newly_labeled=list(d.get("newly_labeled", [])),
        last_lambda=(lam[0], float(lam[1])) if lam else None,
    )


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def save(state: ProjectState) -> Path:
    """Persist the project; returns the manifest path.

    ``project.json`` is replaced atomically, so concurrent readers see the
    old or the new version, never a torn file.
    """
    root = state.root
    root.mkdir(parents=True, exist_ok=True)
    doc = {
        "version": state.version,
        "label_space": list(state.label_space.classes),
        "manifest": state.manifest_path,
        "detections": state.detections_path,
        "embeddings": state.embedding_paths,
        "pipeline": {
            "alpha": state.pipeline.alpha,
            "beta": state.pipeline.beta,
            "embedder": state.pipeline.embedder,
        },
        "grid": {
            "alphas": list(state.grid.alphas),
            "embedders": list(state.grid.embedders),
            "metric": state.grid.metric,
        },
        "train_config": {
            "learning_rate": state.train_config.learning_rate,
            "epochs": state.train_config.epochs,
            "batch_size": state.train_config.batch_size,
            "l2": state.train_config.l2,
            "seed": state.train_config.seed,
            "class_weighting": state.train_config.class_weighting,
            "hidden_units": state.train_config.hidden_units,
        },
        "crop": {"side": state.crop_config.side, "resize_filter": state.crop_config.resize_filter},
        "augmentation": {
            "max_augmentations_per_crop": state.aug_policy.max_augmentations_per_crop,
            "rotation_degrees": state.aug_policy.rotation_degrees,
            "contrast_range": list(state.aug_policy.contrast_range),
            "seed": state.aug_policy.seed,
        },
        "al": _al_to_dict(state.al) if state.al is not None else None,
    }
    if state.al is not None:
        from .active import history_to_csv

        labels_tmp = root / (LABELS_FILE + ".tmp")
        write_labels(labels_tmp, state.al.labels)
        os.replace(labels_tmp, root / LABELS_FILE)
        history_tmp = root / (HISTORY_FILE + ".tmp")
        history_to_csv(state.al, history_tmp)
        os.replace(history_tmp, root / HISTORY_FILE)
        if state.al.last_head is not None:
            ckpt_dir = root / CHECKPOINT_DIR
            ckpt_dir.mkdir(exist_ok=True)
            save_checkpoint(state.al.last_head, ckpt_dir / LAST_HEAD)
    path = root / PROJECT_FILE
    _atomic_write_text(path, json.dumps(doc, indent=1, sort_keys=True))
    return path


def load(root) -> ProjectState:
    """Load a project directory; missing referenced artifacts fail by name."""
    root = Path(root)
    path = root / PROJECT_FILE
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptState(f"unreadable {PROJECT_FILE}: {exc}") from exc
    version = int(doc.get("version", -1))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"project format {version}, engine supports {FORMAT_VERSION}")

    for key, rel in (("manifest", doc["manifest"]), ("detections", doc["detections"])):
        if not (root / rel).is_file():
            raise MissingFile(f"project references missing {key} file: {rel}")
    for rel in doc.get("embeddings", []):
        if not (root / rel).is_file():
            raise MissingFile(f"project references missing embedding store: {rel}")

    label_space = LabelSpace(tuple(doc["label_space"]))
    labels = {}
    if (root / LABELS_FILE).is_file():
        labels = load_labels(root / LABELS_FILE)
    al = None
    if doc.get("al") is not None:
        al = _al_from_dict(doc["al"], label_space, labels)
        head_path = root / CHECKPOINT_DIR / LAST_HEAD
        if head_path.is_file():
            al.last_head = load_checkpoint(head_path)
        elif al.iteration > 0 or al.last_lambda is not None:
            raise MissingFile(
                f"project references missing checkpoint: {CHECKPOINT_DIR}/{LAST_HEAD}"
            )

    grid = doc.get("grid", {})
    pipe = doc.get("pipeline", {})
    crop = doc.get("crop", {})
    aug = doc.get("augmentation", {})
    return ProjectState(
        root=root,
        label_space=label_space,
        manifest_path=doc["manifest"],
        detections_path=doc["detections"],
        embedding_paths=list(doc.get("embeddings", [])),
        pipeline=PipelineConfig(
            alpha=float(pipe.get("alpha", 0.1)),
            beta=float(pipe.get("beta", 0.0)),
            embedder=pipe.get("embedder", "toy"),
        ),
        grid=HyperGrid(
            alphas=tuple(grid.get("alphas", (0.1, 0.3, 0.5, 0.7, 0.9))),
            embedders=tuple(grid.get("embedders", ("toy",))),
            metric=grid.get("metric", "f1"),
        ),
        train_config=TrainConfig(**doc.get("train_config", {})),
        crop_config=CropConfig(
            side=int(crop.get("side", 224)), resize_filter=crop.get("resize_filter", "bilinear")
        ),
        aug_policy=AugmentationPolicy(
            max_augmentations_per_crop=int(aug.get("max_augmentations_per_crop", 3)),
            rotation_degrees=float(aug.get("rotation_degrees", 25.0)),
            contrast_range=tuple(aug.get("contrast_range", (0.7, 1.3))),
            seed=int(aug.get("seed", 0)),
        ),
        al=al,
        version=version,
    )


# --- locking ------------------------------------------------------------------


class ProjectLock:
    """Single-writer lock: a lock file created with O_EXCL holding the pid.

    A lock whose owner process is gone is considered stale and taken over.
    """

    def __init__(self, root):
        self.path = Path(root) / LOCK_FILE
        self._held = False

    def acquire(self) -> "ProjectLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            owner = self._owner()
            if owner is not None and _pid_alive(owner):
                raise ProjectLocked(f"project locked by pid {owner}") from None
            self.path.unlink(missing_ok=True)
            return self.acquire()
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        self._held = True
        return self

    def _owner(self):
        try:
            return int(self.path.read_text().strip())
        except (OSError, ValueError):
            return None

    def release(self) -> None:
        if self._held:
            self.path.unlink(missing_ok=True)
            self._held = False

    def __enter__(self):
        return self.acquire()

    def __exit__(self, *exc):
        self.release()


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True
