"""Audio -> log-mel -> square 8-bit image, and the dequantization back to log-mel."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from PIL import Image

from .dsp import AudioClip, DSPError, StftConfig, apply_filterbank, mel_filterbank, stft_array

POWER_FLOOR = 1e-6
LOG_FLOOR = 0.5 * math.log(POWER_FLOOR)
CANONICAL_N_MELS = (128, 256)


class MelPipeError(ValueError):
    pass


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 16000
    stft: StftConfig = field(default_factory=StftConfig)
    n_mels: int = 128
    f_min: float = 0.0
    f_max: float | None = None
    target_frames: int | None = None
    pad_power_value: float = 1e-6

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise MelPipeError("sample_rate must be positive")
        if self.n_mels < 1:
            raise MelPipeError("n_mels must be >= 1")
        if self.target_frames is not None and self.target_frames < 1:
            raise MelPipeError("target_frames must be >= 1")
        if self.pad_power_value < 0:
            raise MelPipeError("pad_power_value must be >= 0")

    @property
    def frames(self) -> int:
        """Output width; defaults to ``n_mels`` for square images."""
        return self.n_mels if self.target_frames is None else self.target_frames

    @property
    def upper_freq(self) -> float:
        return self.sample_rate / 2.0 if self.f_max is None else self.f_max

    @property
    def canonical(self) -> bool:
        return self.n_mels in CANONICAL_N_MELS and self.frames == self.n_mels

    def filterbank(self):
        return mel_filterbank(
            self.sample_rate, self.stft.n_fft, self.n_mels, float(self.f_min), float(self.upper_freq)
        )


@dataclass(frozen=True)
class LogMelSpectrogram:
    values: np.ndarray
    config: MelConfig

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ValueRange:
    low: float
    high: float

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise MelPipeError("value range bounds must be finite")
        if self.low >= self.high:
            raise MelPipeError(f"degenerate value range: low={self.low} >= high={self.high}")

    @property
    def step(self) -> float:
        return (self.high - self.low) / 255.0


@dataclass(frozen=True)
class SpectrogramImage:
    pixels: np.ndarray
    range: ValueRange | None
    source_id: str | None = None
    emotion: str | None = None

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.dtype != np.uint8 or pixels.ndim != 2:
            raise MelPipeError(f"image pixels must be a 2-D uint8 array, got {pixels.dtype} {pixels.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


def log_compress(power: np.ndarray) -> np.ndarray:
    return 0.5 * np.log(power + POWER_FLOOR)


def forward_logmel(clip: AudioClip, cfg: MelConfig) -> LogMelSpectrogram:
    if clip.sample_rate != cfg.sample_rate:
        raise MelPipeError(
            f"clip sample rate {clip.sample_rate} != config sample rate {cfg.sample_rate}; resample first"
        )
    if len(clip) == 0:
        raise MelPipeError("cannot compute a mel spectrogram of an empty clip")
    power = np.abs(stft_array(clip.samples, cfg.stft)) ** 2
    mel = apply_filterbank(power, cfg.filterbank())
    return LogMelSpectrogram(log_compress(mel), cfg)


def fit_frames(lm: LogMelSpectrogram, cfg: MelConfig | None = None) -> LogMelSpectrogram:
    """Right-pad (power-domain value ``pad_power_value``) or truncate to the target width."""
    cfg = cfg or lm.config
    target = cfg.frames
    n = lm.n_frames
    if n == target:
        return lm
    if n > target:
        return LogMelSpectrogram(lm.values[:, :target].copy(), cfg)
    pad_value = 0.5 * math.log(cfg.pad_power_value + POWER_FLOOR)
    values = np.full((lm.values.shape[0], target), pad_value)
    values[:, :n] = lm.values
    return LogMelSpectrogram(values, cfg)


def quantize(lm: LogMelSpectrogram, value_range: ValueRange, **meta) -> SpectrogramImage:
    scaled = (lm.values - value_range.low) / (value_range.high - value_range.low)
    # np.rint rounds half to even
    pixels = np.rint(255.0 * np.clip(scaled, 0.0, 1.0)).astype(np.uint8)
    return SpectrogramImage(pixels, value_range, **meta)


def dequantize(img: SpectrogramImage, cfg: MelConfig | None = None) -> LogMelSpectrogram:
    if img.range is None:
        raise MelPipeError("image carries no value range; load it from the dataset manifest")
    r = img.range
    values = r.low + (img.pixels.astype(np.float64) / 255.0) * (r.high - r.low)
    return LogMelSpectrogram(values, cfg or MelConfig(n_mels=img.shape[0], target_frames=img.shape[1]))


def from_unit_range(m: np.ndarray, value_range: ValueRange, cfg: MelConfig | None = None) -> LogMelSpectrogram:
    """Map a generator output in [-1, 1] to log-mel through its pixel equivalent."""
    m = np.asarray(m, dtype=np.float64)
    pixel_equiv = (m + 1.0) / 2.0 * 255.0
    values = value_range.low + (pixel_equiv / 255.0) * (value_range.high - value_range.low)
    return LogMelSpectrogram(values, cfg or MelConfig(n_mels=m.shape[0], target_frames=m.shape[1]))


def dataset_range(lms: Iterable[LogMelSpectrogram]) -> ValueRange:
    high = -math.inf
    count = 0
    for lm in lms:
        high = max(high, float(np.max(lm.values)))
        count += 1
    if count == 0:
        raise MelPipeError("cannot compute a value range from an empty collection")
    return ValueRange(LOG_FLOOR, high)


def encode_clip(clip: AudioClip, cfg: MelConfig) -> LogMelSpectrogram:
    """forward_logmel followed by fit_frames."""
    return fit_frames(forward_logmel(clip, cfg), cfg)


def save_png(img: SpectrogramImage, path: str | os.PathLike) -> None:
    Image.fromarray(np.ascontiguousarray(img.pixels)).save(path, format="PNG", optimize=False)


def load_png(path: str | os.PathLike, value_range: ValueRange | None = None, **meta) -> SpectrogramImage:
    """Read an 8-bit single-channel PNG; anything else raises :class:`MelPipeError`."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            fmt = im.format
            pixels = np.array(im) if mode == "L" else None
    except (OSError, SyntaxError) as exc:
        raise MelPipeError(f"{os.fspath(path)}: unreadable image ({exc})") from exc
    if fmt != "PNG":
        raise MelPipeError(f"{os.fspath(path)}: not a PNG file (format {fmt})")
    if mode != "L":
        raise MelPipeError(f"{os.fspath(path)}: expected 8-bit grayscale, got mode {mode!r}")
    return SpectrogramImage(pixels.astype(np.uint8), value_range, **meta)

