"""Spectrogram image back to audio: dequantize, undo the log, NNLS to linear, Griffin-Lim."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dsp import AudioClip, DSPError, StftConfig, istft_array, mel_to_linear, stft_array
from .melpipe import LOG_FLOOR, POWER_FLOOR, LogMelSpectrogram, MelConfig, SpectrogramImage, dequantize


@dataclass(frozen=True)
class GriffinLimConfig:
    n_iter: int = 32
    momentum: float = 0.99
    seed: int = 0
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")


@dataclass(frozen=True)
class NNLSConfig:
    max_iter: int = 1000
    tol: float = 1e-10


def logmel_to_power(lm) -> np.ndarray:
    """Invert ``f = 0.5 * ln(x + 1e-6)``: ``x = exp(2 f) - 1e-6``, clamped at 0.

    Values at or below the floor map to exactly zero; the exp/log pair
    alone leaves rounding residue there.
    """
    values = np.asarray(getattr(lm, "values", lm), dtype=np.float64)
    power = np.maximum(np.exp(2.0 * values) - POWER_FLOOR, 0.0)
    return np.where(values <= LOG_FLOOR, 0.0, power)


def spectral_convergence(y: np.ndarray, magnitude: np.ndarray, cfg: StftConfig) -> float:
    """``||  |STFT(y)| - M  ||_F / ||M||_F``."""
    denom = np.linalg.norm(magnitude)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(np.abs(stft_array(y, cfg)) - magnitude) / denom)


def griffin_lim(
    magnitude: np.ndarray,
    cfg: GriffinLimConfig | None = None,
    sample_rate: int = 16000,
    length: int | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> AudioClip:
    """Recover a signal whose STFT magnitude approximates ``magnitude``.

    Phases start from a seeded uniform draw. With ``momentum > 0`` the fast
    variant extrapolates the projected spectrogram against the previous
    iterate. ``callback(i, signal)`` sees the time-domain estimate after each
    iteration.
    """
    cfg = cfg or GriffinLimConfig()
    M = np.asarray(magnitude, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != cfg.stft.n_bins:
        raise DSPError(f"magnitude must have {cfg.stft.n_bins} bins, got shape {M.shape}")
    if not np.all(np.isfinite(M)) or np.any(M < 0):
        raise DSPError("magnitude must be finite and non-negative")
    n_frames = M.shape[1]
    # natural length: the one whose STFT has exactly n_frames frames
    work_len = (n_frames - 1) * cfg.stft.hop_length if cfg.stft.centered else (
        (n_frames - 1) * cfg.stft.hop_length + cfg.stft.n_fft
    )
    work_len = max(work_len, 1)
    out_len = work_len if length is None else length

    if not np.any(M):
        return AudioClip(np.zeros(out_len), sample_rate)

    rng = np.random.default_rng(cfg.seed)
    angles = np.exp(2j * np.pi * rng.random(M.shape))
    eps = np.finfo(np.float64).tiny
    alpha = cfg.momentum / (1.0 + cfg.momentum)
    rebuilt = np.zeros_like(angles)
    for i in range(cfg.n_iter):
        previous = rebuilt
        y = istft_array(M * angles, cfg.stft, work_len)
        rebuilt = stft_array(y, cfg.stft)
        angles = rebuilt - alpha * previous
        angles = angles / (np.abs(angles) + eps)
        if callback is not None:
            callback(i, istft_array(M * angles, cfg.stft, work_len))
    return AudioClip(istft_array(M * angles, cfg.stft, out_len), sample_rate)


def invert_logmel(
    lm: LogMelSpectrogram,
    mel_cfg: MelConfig,
    gl_cfg: GriffinLimConfig | None = None,
    nnls: NNLSConfig | None = None,
) -> AudioClip:
    nnls = nnls or NNLSConfig()
    gl_cfg = gl_cfg or GriffinLimConfig(stft=mel_cfg.stft)
    if gl_cfg.stft != mel_cfg.stft:
        raise DSPError("Griffin-Lim STFT settings must match the mel configuration")
    fb = mel_cfg.filterbank()
    if lm.values.shape[0] != fb.n_mels:
        raise DSPError(f"log-mel has {lm.values.shape[0]} bands, config expects {fb.n_mels}")
    power = mel_to_linear(logmel_to_power(lm), fb, nnls.max_iter, nnls.tol)
    magnitude = np.sqrt(power)
    out_len = lm.values.shape[1] * mel_cfg.stft.hop_length
    return griffin_lim(magnitude, gl_cfg, mel_cfg.sample_rate, length=out_len)


def invert_image(
    img: SpectrogramImage,
    mel_cfg: MelConfig,
    gl_cfg: GriffinLimConfig | None = None,
    nnls: NNLSConfig | None = None,
) -> AudioClip:
    """dequantize -> power -> NNLS linear power -> sqrt -> Griffin-Lim.

    Output length is ``width * hop`` samples.
    """
    return invert_logmel(dequantize(img, mel_cfg), mel_cfg, gl_cfg, nnls)
