import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wildloop.embedding import StoreEmbedder, default_registry
from wildloop.ingest import Dataset, Detection, DetectionSet, ImageRecord, LabelSpace
from wildloop.merge import PipelineRuntime
from wildloop.synth import SynthSpec, synthesize

CLASSES = ("empty", "red_fox", "roe_deer", "wild_boar", "european_hare")


@pytest.fixture(scope="session")
def label_space():
    return LabelSpace(CLASSES)


@pytest.fixture(scope="session")
def small_project():
    """Shared easy synthetic project (spread below the separability bound)."""
    return synthesize(
        SynthSpec(n_images=400, cluster_spread=0.55, clutter_spread=0.5), seed=41
    )


@pytest.fixture(scope="session")
def small_runtime(small_project):
    reg = default_registry()
    reg.register(StoreEmbedder(small_project.box_store))
    reg.register(StoreEmbedder(small_project.whole_store))
    return PipelineRuntime(registry=reg)


def make_dataset(entries, classes=CLASSES):
    """entries: list of (image_id, station, label, [(category, conf), ...])."""
    images, dets = {}, {}
    for image_id, station, label, boxes in entries:
        images[image_id] = ImageRecord(image_id=image_id, station_id=station, label=label)
        dets[image_id] = DetectionSet(
            image_id,
            tuple(
                Detection((0.1, 0.1, 0.5, 0.5), conf, category) for category, conf in boxes
            ),
        )
    return Dataset(images, dets, LabelSpace(classes))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
