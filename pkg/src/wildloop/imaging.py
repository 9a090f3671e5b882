"""Square crops from detector boxes, plus label-preserving augmentation.

Crops are cut from the source image, expanded to a square along the shorter
axis, and resampled to a fixed side length.  Augmentation (rotation, flip,
contrast) is generated on demand during training; variants are deterministic
functions of (crop_id, policy seed), never of call order.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateBox, NoPixels
from .ingest import Detection

RESIZE_FILTERS = ("nearest", "bilinear")


@dataclass(frozen=True)
class CropConfig:
    side: int = 224
    resize_filter: str = "bilinear"

    def __post_init__(self):
        if self.side < 8:
            raise ValueError("crop side must be >= 8")
        if self.resize_filter not in RESIZE_FILTERS:
            raise ValueError(f"resize_filter must be one of {RESIZE_FILTERS}")


@dataclass
class CropRecord:
    """One bounding-box image: ``crop_id`` is ``imageId#boxIndex#augIndex``.

    ``pixels`` may be None when embeddings are precomputed; such crops
    cannot be augmented or embedded by a pixel-based provider.  Under the
    purity assumption the crop inherits the owning image's label.
    """

    crop_id: str
    image_id: str
    box_index: int
    detector_confidence: float
    aug_descriptor: str | None = None
    pixels: np.ndarray | None = None
    label: str | None = None

    @staticmethod
    def make_id(image_id: str, box_index: int, aug_index: int = 0) -> str:
        return f"{image_id}#{box_index}#{aug_index}"


@dataclass(frozen=True)
class AugmentationPolicy:
    """Sampled augmentations: rotation (degrees), horizontal flip, contrast.

    Each variant applies 1-3 ops drawn without replacement; the ranges are
    mild so labels are preserved.
    """

    max_augmentations_per_crop: int = 3
    rotation_degrees: float = 25.0
    contrast_range: tuple[float, float] = (0.7, 1.3)
    seed: int = 0

    def __post_init__(self):
        if self.max_augmentations_per_crop < 0:
            raise ValueError("max_augmentations_per_crop must be >= 0")


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    # Pixel values round half up and clamp to [0, 255].
    return np.clip(np.floor(arr + 0.5), 0.0, 255.0).astype(np.uint8)


def crop_and_resize(
    image_pixels: np.ndarray,
    det: Detection,
    cfg: CropConfig = CropConfig(),
    *,
    image_id: str = "",
    box_index: int = 0,
    label: str | None = None,
) -> CropRecord:
    """Cut the detector box out of the image as a fixed-size square crop.

    The normalized box is mapped to pixel edges with round-half-up, expanded
    symmetrically along its shorter axis to a square, clamped at the image
    borders, padded by edge replication where clamping removed content, and
    resampled to ``cfg.side``.

    Raises DegenerateBox when the box collapses to zero pixels.
    """
    if image_pixels.ndim != 3 or image_pixels.shape[2] != 3:
        raise ValueError("expected an (h, w, 3) RGB array")
    h, w = image_pixels.shape[:2]
    bx, by, bw, bh = det.bbox
    left = _round_half_up(bx * w)
    right = _round_half_up((bx + bw) * w)
    top = _round_half_up(by * h)
    bottom = _round_half_up((by + bh) * h)
    if right - left <= 0 or bottom - top <= 0:
        raise DegenerateBox(f"box {det.bbox} collapses to {right - left}x{bottom - top} px")

    side = max(right - left, bottom - top)
    extra_w = side - (right - left)
    left -= extra_w // 2
    right += extra_w - extra_w // 2
    extra_h = side - (bottom - top)
    top -= extra_h // 2
    bottom += extra_h - extra_h // 2

    win = image_pixels[max(top, 0):min(bottom, h), max(left, 0):min(right, w)]
    pad = (
        (max(-top, 0), max(bottom - h, 0)),
        (max(-left, 0), max(right - w, 0)),
        (0, 0),
    )
    if any(p for pair in pad for p in pair):
        win = np.pad(win, pad, mode="edge")

    if cfg.resize_filter == "nearest":
        out = kernels.resize_nearest(np.ascontiguousarray(win), cfg.side)
    else:
        out = _to_uint8(kernels.resize_bilinear(win.astype(np.float64), cfg.side))
    return CropRecord(
        crop_id=CropRecord.make_id(image_id, box_index, 0),
        image_id=image_id,
        box_index=box_index,
        detector_confidence=det.confidence,
        pixels=out,
        label=label,
    )


def _variant_rng(crop_id: str, seed: int, variant: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{crop_id}:{variant}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def apply_contrast(pixels: np.ndarray, factor: float) -> np.ndarray:
    """Scale contrast around mid-gray; factor 1.0 is an exact identity."""
    return _to_uint8((pixels.astype(np.float64) - 128.0) * factor + 128.0)


def apply_hflip(pixels: np.ndarray) -> np.ndarray:
    return pixels[:, ::-1].copy()


def apply_rotation(pixels: np.ndarray, degrees: float) -> np.ndarray:
    return _to_uint8(kernels.rotate_bilinear(pixels.astype(np.float64), np.deg2rad(degrees)))


_OPS = ("rotate", "hflip", "contrast")


def augment(crop: CropRecord, policy: AugmentationPolicy, k: int) -> list[CropRecord]:
    """Produce ``k`` augmented variants of a crop.

    Deterministic for fixed (crop_id, policy.seed); descriptors record the
    exact ops and parameters applied, in order.
    """
    if k > policy.max_augmentations_per_crop:
        raise ValueError(
            f"k={k} exceeds max_augmentations_per_crop={policy.max_augmentations_per_crop}"
        )
    if k == 0:
        return []
    if crop.pixels is None:
        raise NoPixels(f"crop '{crop.crop_id}' has no pixels to augment")

    variants = []
    for t in range(1, k + 1):
        rng = _variant_rng(crop.crop_id, policy.seed, t)
        n_ops = int(rng.integers(1, 4))
        ops = list(rng.choice(_OPS, size=n_ops, replace=False))
        pixels = crop.pixels
        parts = []
        for op in ops:
            if op == "rotate":
                angle = float(rng.uniform(-policy.rotation_degrees, policy.rotation_degrees))
                pixels = apply_rotation(pixels, angle)
                parts.append(f"rotate({angle:+.4f})")
            elif op == "hflip":
                pixels = apply_hflip(pixels)
                parts.append("hflip")
            else:
                lo, hi = policy.contrast_range
                factor = float(rng.uniform(lo, hi))
                pixels = apply_contrast(pixels, factor)
                parts.append(f"contrast({factor:.4f})")
        variants.append(
            CropRecord(
                crop_id=CropRecord.make_id(crop.image_id, crop.box_index, t),
                image_id=crop.image_id,
                box_index=crop.box_index,
                detector_confidence=crop.detector_confidence,
                aug_descriptor="|".join(parts),
                pixels=pixels,
                label=crop.label,
            )
        )
    return variants


def load_image(path) -> np.ndarray:
    """Read an 8-bit raster image from disk as an (h, w, 3) RGB array."""
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))
