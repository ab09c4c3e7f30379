"""Per-emotion PCA-Gaussian image sampler and external image import.

This stands in for a trained generator: fit a mean image plus the top-k
principal directions of a set of spectrogram images, then sample
``mean + sum_i z_i * sigma_i * basis_i`` with standard-normal ``z``.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .melpipe import MelConfig, MelPipeError, SpectrogramImage, ValueRange, load_png

log = logging.getLogger(__name__)

MAGIC = b"BPGM"
FORMAT_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ImageModel:
    emotion: str
    mean_image: np.ndarray  # flattened, length h*w
    basis: np.ndarray  # (h*w, k), orthonormal columns
    component_stddevs: np.ndarray  # (k,)
    shape: tuple[int, int]
    range: ValueRange | None
    mel_config: MelConfig | None = None

    @property
    def k(self) -> int:
        return self.basis.shape[1]


def fit(
    images: Sequence[SpectrogramImage],
    k: int = 32,
    emotion: str = "",
    mel_config: MelConfig | None = None,
) -> ImageModel:
    n = len(images)
    if k < 0:
        raise ModelError("k must be >= 0")
    if n < k + 1:
        raise ModelError(f"need at least k+1={k + 1} images to fit {k} components, got {n}")
    shape = images[0].shape
    for img in images:
        if img.shape != shape:
            raise ModelError(f"image shape {img.shape} differs from {shape}")
    X = np.stack([img.pixels.astype(np.float64).ravel() for img in images])
    mean = X.mean(axis=0)
    centered = X - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    basis = vt[:k].T.copy()
    stddevs = s[:k] / np.sqrt(n - 1) if n > 1 else np.zeros(k)
    value_range = images[0].range
    return ImageModel(emotion, mean, basis, stddevs, shape, value_range, mel_config)


def sample(model: ImageModel, n: int, seed: int) -> list[SpectrogramImage]:
    """Draw ``n`` 8-bit images; deterministic in ``(model, n, seed)``."""
    if n <= 0:
        return []
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.k))
    flat = model.mean_image[None, :] + (z * model.component_stddevs[None, :]) @ model.basis.T
    pixels = np.rint(np.clip(flat, 0.0, 255.0)).astype(np.uint8)
    h, w = model.shape
    return [
        SpectrogramImage(p.reshape(h, w), model.range, emotion=model.emotion or None)
        for p in pixels
    ]


def save_model(model: ImageModel, path: str | os.PathLike) -> None:
    """Flat little-endian binary: header, then mean, stddevs and basis (row-major float64)."""
    name = model.emotion.encode("utf-8")
    if model.range is None:
        raise ModelError("model has no value range; fit it on images that carry one")
    h, w = model.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<H", len(name)))
        fh.write(name)
        fh.write(struct.pack("<III", model.k, h, w))
        fh.write(struct.pack("<dd", model.range.low, model.range.high))
        fh.write(np.ascontiguousarray(model.mean_image, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.component_stddevs, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.basis, dtype="<f8").tobytes())


def load_model(path: str | os.PathLike, mel_config: MelConfig | None = None) -> ImageModel:
    data = Path(path).read_bytes()

    def take(offset, size):
        if offset + size > len(data):
            raise ModelError(f"{os.fspath(path)}: truncated model file")
        return data[offset : offset + size], offset + size

    magic, off = take(0, 4)
    if magic != MAGIC:
        raise ModelError(f"{os.fspath(path)}: not a BPGM model file")
    raw, off = take(off, 2)
    (version,) = struct.unpack("<H", raw)
    if version != FORMAT_VERSION:
        raise ModelError(f"{os.fspath(path)}: unsupported model version {version}")
    raw, off = take(off, 2)
    (name_len,) = struct.unpack("<H", raw)
    name, off = take(off, name_len)
    raw, off = take(off, 12)
    k, h, w = struct.unpack("<III", raw)
    raw, off = take(off, 16)
    low, high = struct.unpack("<dd", raw)
    d = h * w
    arrays = []
    for count in (d, k, d * k):
        raw, off = take(off, 8 * count)
        arrays.append(np.frombuffer(raw, dtype="<f8").astype(np.float64))
    if off != len(data):
        raise ModelError(f"{os.fspath(path)}: {len(data) - off} trailing bytes")
    mean, stddevs, basis = arrays
    return ImageModel(
        name.decode("utf-8"), mean, basis.reshape(d, k), stddevs, (h, w), ValueRange(low, high), mel_config
    )


@dataclass
class ImportResult:
    images: list[SpectrogramImage] = field(default_factory=list)
    names: list[str] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)
    warnings: int = 0


def import_images(
    directory: str | os.PathLike,
    expected_shape: tuple[int, int] | None,
    value_range: ValueRange | None,
    mel_config: MelConfig | None = None,
) -> ImportResult:
    """Load every ``*.png`` in ``directory`` (sorted by filename), validating format and shape."""
    directory = Path(directory)
    result = ImportResult()
    paths = sorted(directory.glob("*.png"))
    if not paths:
        log.warning("no PNG images found in %s", directory)
        result.warnings += 1
        return result
    for p in paths:
        try:
            img = load_png(p, value_range, source_id=p.stem)
        except MelPipeError as exc:
            result.rejected.append((p.name, str(exc)))
            continue
        if expected_shape is not None and img.shape != tuple(expected_shape):
            result.rejected.append(
                (p.name, f"{p.name}: shape {img.shape} does not match expected {tuple(expected_shape)}")
            )
            continue
        result.images.append(img)
        result.names.append(p.name)
    return result
