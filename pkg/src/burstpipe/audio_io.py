"""Mono WAV reading/writing and sample-rate conversion."""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .dsp import AudioClip


class AudioIOError(ValueError):
    pass


def read_wav(path: str | os.PathLike) -> AudioClip:
    """Read a WAV file as float64 in [-1, 1]; multichannel input is averaged to mono."""
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise AudioIOError(f"{os.fspath(path)}: cannot read WAV ({exc})") from exc
    if data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioIOError(f"{os.fspath(path)}: unsupported sample type {data.dtype}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return AudioClip(samples, rate)


def write_wav(path: str | os.PathLike, clip: AudioClip, fmt: str = "pcm16") -> None:
    """Write ``pcm16`` (clipped, rounded) or ``float32`` mono WAV."""
    if fmt == "pcm16":
        data = np.rint(np.clip(clip.samples, -1.0, 1.0) * 32767.0).astype("<i2")
    elif fmt == "float32":
        data = clip.samples.astype("<f4")
    else:
        raise AudioIOError(f"unknown WAV format {fmt!r}; use 'pcm16' or 'float32'")
    wavfile.write(path, clip.sample_rate, data)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    if clip.sample_rate == target_rate:
        return clip
    g = math.gcd(clip.sample_rate, target_rate)
    y = resample_poly(clip.samples, target_rate // g, clip.sample_rate // g)
    return AudioClip(y, target_rate)
