"""Embedding providers and the on-disk embedding store.

The engine never runs a neural backbone itself: crops are mapped to latent
vectors either by the built-in toy embedder (cheap pixel statistics, good
enough for tests and small projects) or by looking up vectors that an
external model wrote into an embedding store file.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptStore,
    DimensionMismatch,
    MissingEmbedding,
    NoPixels,
    UnknownProvider,
)
from .imaging import CropRecord

STORE_MAGIC = b"WLEMB1"

# Toy feature layout: 3 channel means + 3 channel variances + 4x4 block
# means per channel.  Pixels are scaled to [0, 1] first, so changing one
# pixel by one 8-bit step moves any coordinate by at most
# 16 / (255 * side^2) and the whole vector (L2) by sqrt(54) times that.
TOY_DIM = 3 + 3 + 4 * 4 * 3


@dataclass(frozen=True)
class EmbedderId:
    name: str
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatch(f"embedder dim must be >= 1, got {self.dim}")


@dataclass
class EmbeddingVector:
    crop_id: str
    values: np.ndarray


class ToyEmbedder:
    """Deterministic pixel-statistics embedder (no external model needed)."""

    requires_pixels = True

    def __init__(self):
        self.ident = EmbedderId("toy", TOY_DIM)

    def embed_batch(self, crops: list[CropRecord]) -> np.ndarray:
        out = np.empty((len(crops), TOY_DIM), dtype=np.float64)
        for i, crop in enumerate(crops):
            if crop.pixels is None:
                raise NoPixels(f"crop '{crop.crop_id}' has no pixels to embed")
            out[i] = self._features(crop.pixels)
        return out

    @staticmethod
    def _features(pixels: np.ndarray) -> np.ndarray:
        x = pixels.astype(np.float64) / 255.0
        means = x.mean(axis=(0, 1))
        variances = x.var(axis=(0, 1))
        blocks = np.empty((4, 4, 3), dtype=np.float64)
        rows = np.array_split(np.arange(x.shape[0]), 4)
        cols = np.array_split(np.arange(x.shape[1]), 4)
        for r in range(4):
            for c in range(4):
                blocks[r, c] = x[np.ix_(rows[r], cols[c])].mean(axis=(0, 1))
        return np.concatenate([means, variances, blocks.reshape(-1)])


class EmbeddingStore:
    """Immutable crop_id -> float32 row mapping, written by one producer."""

    def __init__(self, provider: EmbedderId, crop_ids=(), data=None):
        self.provider = provider
        self.index: dict[str, int] = {cid: i for i, cid in enumerate(crop_ids)}
        if len(self.index) != len(tuple(crop_ids)):
            raise CorruptStore("duplicate crop_id in store")
        if data is None:
            data = np.zeros((0, provider.dim), dtype=np.float32)
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 2 or data.shape[1] != provider.dim:
            raise DimensionMismatch(
                f"store data is {data.shape}, provider dim is {provider.dim}"
            )
        if data.shape[0] != len(self.index):
            raise CorruptStore(
                f"{len(self.index)} indexed rows but {data.shape[0]} data rows"
            )
        self.data = data

    def __len__(self):
        return self.data.shape[0]

    def __contains__(self, crop_id):
        return crop_id in self.index

    def get(self, crop_id: str) -> np.ndarray:
        row = self.index.get(crop_id)
        if row is None:
            raise MissingEmbedding(crop_id)
        return self.data[row]

    @property
    def crop_ids(self) -> list[str]:
        ordered = sorted(self.index.items(), key=lambda kv: kv[1])
        return [cid for cid, _ in ordered]


class StoreEmbedder:
    """Provider backed by a precomputed EmbeddingStore."""

    requires_pixels = False

    def __init__(self, store: EmbeddingStore):
        self.store = store
        self.ident = store.provider

    def embed_batch(self, crops: list[CropRecord]) -> np.ndarray:
        out = np.empty((len(crops), self.ident.dim), dtype=np.float64)
        for i, crop in enumerate(crops):
            out[i] = self.store.get(crop.crop_id)
        return out


class ProviderRegistry:
    """Named embedding providers available to a project."""

    def __init__(self):
        self._providers = {}

    def register(self, provider) -> None:
        name = provider.ident.name
        if name in self._providers:
            raise UnknownProvider(f"provider '{name}' already registered")
        self._providers[name] = provider

    def get(self, name: str):
        try:
            return self._providers[name]
        except KeyError:
            raise UnknownProvider(f"provider '{name}' is not registered") from None

    def names(self) -> list[str]:
        return list(self._providers)

    def __contains__(self, name):
        return name in self._providers


def default_registry() -> ProviderRegistry:
    reg = ProviderRegistry()
    reg.register(ToyEmbedder())
    return reg


def embed(crops: list[CropRecord], provider) -> list[EmbeddingVector]:
    """Map crops to embedding vectors with the given provider instance."""
    data = provider.embed_batch(crops)
    if data.shape[1] != provider.ident.dim:
        raise DimensionMismatch(
            f"provider '{provider.ident.name}' produced dim {data.shape[1]}, "
            f"declared {provider.ident.dim}"
        )
    return [EmbeddingVector(c.crop_id, data[i]) for i, c in enumerate(crops)]


# --- store file format -------------------------------------------------------
#
#   magic "WLEMB1"
#   provider name: u32 LE byte length + UTF-8 bytes
#   dim: u32 LE
#   row count: u64 LE
#   per row: crop_id (u32 LE length + UTF-8) + dim float32 LE values


def _write_str(fh, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_exact(fh, n: int) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise CorruptStore(f"truncated store: wanted {n} bytes, got {len(raw)}")
    return raw


def _read_str(fh) -> str:
    (length,) = struct.unpack("<I", _read_exact(fh, 4))
    return _read_exact(fh, length).decode("utf-8")


def write_store(store: EmbeddingStore, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(STORE_MAGIC)
        _write_str(fh, store.provider.name)
        fh.write(struct.pack("<I", store.provider.dim))
        fh.write(struct.pack("<Q", len(store)))
        data = store.data
        for crop_id in store.crop_ids:
            _write_str(fh, crop_id)
            fh.write(data[store.index[crop_id]].astype("<f4").tobytes())
    tmp.replace(path)


def read_store(path) -> EmbeddingStore:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(STORE_MAGIC))
        if magic != STORE_MAGIC:
            raise CorruptStore(f"bad magic in {path.name}: {magic!r}")
        name = _read_str(fh)
        (dim,) = struct.unpack("<I", _read_exact(fh, 4))
        (rows,) = struct.unpack("<Q", _read_exact(fh, 8))
        crop_ids = []
        data = np.empty((rows, dim), dtype=np.float32)
        for i in range(rows):
            crop_ids.append(_read_str(fh))
            data[i] = np.frombuffer(_read_exact(fh, 4 * dim), dtype="<f4")
        if fh.read(1):
            raise CorruptStore(f"trailing bytes in {path.name}")
    return EmbeddingStore(EmbedderId(name, dim), crop_ids, data)
