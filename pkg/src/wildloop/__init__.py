"""wildloop: label-efficient camera-trap image classification.

Ingests object-detector output and crop embeddings, trains and tunes a
softmax classification head, merges box scores into image-level labels, and
drives a human-in-the-loop labeling loop that spends annotation effort where
the model is least certain.
"""

from .ingest import (
    Dataset,
    Detection,
    DetectionSet,
    EMPTY_CLASS,
    ImageRecord,
    LabelSpace,
    filter_high_conf,
    load_project,
)
from .imaging import AugmentationPolicy, CropConfig, CropRecord, augment, crop_and_resize
from .embedding import (
    EmbedderId,
    EmbeddingStore,
    EmbeddingVector,
    ProviderRegistry,
    StoreEmbedder,
    ToyEmbedder,
    default_registry,
    embed,
    read_store,
    write_store,
)
from .classifier import (
    HeadModel,
    TrainConfig,
    cold_start,
    gradient,
    load_checkpoint,
    predict_scores,
    save_checkpoint,
    train,
    warm_start,
)
from .merge import (
    ImagePrediction,
    PipelineConfig,
    PipelineRuntime,
    merge_image,
    predict_dataset,
)
from .metrics import ConfusionMatrix, MetricReport, collapse_empty, confusion, report
from .tuning import (
    HyperGrid,
    SplitAssignment,
    TuningRecord,
    evaluate,
    make_split,
    make_station_partition,
    tune,
)
from .active import (
    ALDeps,
    ALState,
    IterationRecord,
    acquisition_score,
    finalize,
    init_state,
    iterate,
    select_batch,
    submit_labels,
)
from .synth import SynthSpec, SynthProject, full_frame_view, generate_synthetic_project, synthesize

__version__ = "0.1.0"

__all__ = [
    "ALDeps",
    "ALState",
    "AugmentationPolicy",
    "ConfusionMatrix",
    "CropConfig",
    "CropRecord",
    "Dataset",
    "Detection",
    "DetectionSet",
    "EMPTY_CLASS",
    "EmbedderId",
    "EmbeddingStore",
    "EmbeddingVector",
    "HeadModel",
    "HyperGrid",
    "ImagePrediction",
    "ImageRecord",
    "IterationRecord",
    "LabelSpace",
    "MetricReport",
    "PipelineConfig",
    "PipelineRuntime",
    "ProviderRegistry",
    "SplitAssignment",
    "StoreEmbedder",
    "SynthProject",
    "SynthSpec",
    "ToyEmbedder",
    "TrainConfig",
    "TuningRecord",
    "acquisition_score",
    "augment",
    "cold_start",
    "collapse_empty",
    "confusion",
    "crop_and_resize",
    "default_registry",
    "embed",
    "evaluate",
    "filter_high_conf",
    "finalize",
    "full_frame_view",
    "generate_synthetic_project",
    "gradient",
    "init_state",
    "iterate",
    "load_checkpoint",
    "load_project",
    "make_split",
    "make_station_partition",
    "merge_image",
    "predict_dataset",
    "predict_scores",
    "read_store",
    "report",
    "save_checkpoint",
    "select_batch",
    "submit_labels",
    "synthesize",
    "train",
    "tune",
    "warm_start",
    "write_store",
]
