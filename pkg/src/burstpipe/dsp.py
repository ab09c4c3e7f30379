"""Core transforms: windows, STFT/ISTFT, Slaney mel filterbanks and NNLS mel inversion.

Everything here is a pure function of its inputs. Matrices follow the
``(bins, frames)`` / ``(n_mels, frames)`` layout used throughout the package.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

WINDOW_KINDS = ("hann", "rectangular")


class DSPError(ValueError):
    """Raised for invalid transform inputs or configurations."""


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform plus its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise DSPError(f"audio must be mono (1-D), got shape {samples.shape}")
        if int(self.sample_rate) <= 0:
            raise DSPError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise DSPError("audio samples must be finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 1024
    win_length: int = 1024
    hop_length: int = 256
    window: str = "hann"
    centered: bool = True

    def __post_init__(self):
        if not (0 < self.hop_length <= self.win_length <= self.n_fft):
            raise DSPError(
                "need 0 < hop_length <= win_length <= n_fft, got "
                f"hop={self.hop_length} win={self.win_length} n_fft={self.n_fft}"
            )
        if self.n_fft & (self.n_fft - 1):
            raise DSPError(f"n_fft must be a power of two, got {self.n_fft}")
        if self.window not in WINDOW_KINDS:
            raise DSPError(f"unknown window {self.window!r}; expected one of {WINDOW_KINDS}")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1


@dataclass(frozen=True)
class ComplexSpectrogram:
    values: np.ndarray
    config: StftConfig

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.config.n_bins:
            raise DSPError(
                f"spectrogram must have {self.config.n_bins} bins, got shape {self.values.shape}"
            )

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class MelFilterbank:
    weights: np.ndarray
    sample_rate: int
    f_min: float
    f_max: float
    center_freqs: np.ndarray = field(repr=False)

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]


def make_window(kind: str, length: int) -> np.ndarray:
    """Return a tapering window of ``length`` samples.

    ``hann`` is the periodic form ``0.5 * (1 - cos(2*pi*n/length))`` so that
    shifted copies at hop ``length/4`` sum to a constant.
    """
    if length < 1:
        raise DSPError(f"window length must be >= 1, got {length}")
    if kind == "hann":
        n = np.arange(length)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)
    if kind == "rectangular":
        return np.ones(length)
    raise DSPError(f"unknown window kind {kind!r}")


def _analysis_window(cfg: StftConfig) -> np.ndarray:
    win = make_window(cfg.window, cfg.win_length)
    if cfg.win_length < cfg.n_fft:
        left = (cfg.n_fft - cfg.win_length) // 2
        win = np.pad(win, (left, cfg.n_fft - cfg.win_length - left))
    return win


def _n_frames(n_samples: int, cfg: StftConfig) -> int:
    if cfg.centered:
        return 1 + n_samples // cfg.hop_length
    return 1 + max(n_samples - cfg.n_fft, 0) // cfg.hop_length


def _pad_signal(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    if cfg.centered:
        pad = cfg.n_fft // 2
        if x.shape[0] == 1:
            return np.pad(x, pad, mode="edge")
        return np.pad(x, pad, mode="reflect")
    if x.shape[0] < cfg.n_fft:
        return np.pad(x, (0, cfg.n_fft - x.shape[0]))
    return x


def stft_array(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """STFT of a 1-D array; returns complex ``(n_fft//2 + 1, n_frames)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 1:
        raise DSPError("stft needs a non-empty 1-D signal")
    padded = _pad_signal(x, cfg)
    n_frames = _n_frames(x.shape[0], cfg)
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.n_fft)[:: cfg.hop_length]
    frames = frames[:n_frames] * _analysis_window(cfg)
    return np.fft.rfft(frames, n=cfg.n_fft, axis=1).T


def _fold_index(n_samples: int, padded_len: int, cfg: StftConfig) -> np.ndarray:
    """Map every position of the padded signal to the sample it copies (-1 = zero pad)."""
    if cfg.centered:
        idx = _pad_signal(np.arange(n_samples, dtype=np.float64), cfg).astype(np.int64)
    else:
        idx = np.arange(max(n_samples, cfg.n_fft), dtype=np.int64)
        idx[n_samples:] = -1
    if idx.shape[0] < padded_len:
        idx = np.concatenate([idx, np.full(padded_len - idx.shape[0], -1, dtype=np.int64)])
    return idx[:padded_len]


def istft_array(spec: np.ndarray, cfg: StftConfig, out_length: int | None = None) -> np.ndarray:
    """Least-squares inverse of :func:`stft_array`.

    The synthesis is the exact pseudo-inverse of the analysis operator,
    including the reflect padding: overlap-added numerator and squared-window
    denominator are folded back onto the samples the padding copied.
    """
    if cfg.hop_length > cfg.win_length:
        raise DSPError("hop_length > win_length violates the overlap-add condition")
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[0] != cfg.n_bins:
        raise DSPError(f"expected {cfg.n_bins} bins, got shape {spec.shape}")
    n_frames = spec.shape[1]
    if out_length is None:
        out_length = (n_frames - 1) * cfg.hop_length if cfg.centered else (
            (n_frames - 1) * cfg.hop_length + cfg.n_fft
        )
    if out_length < 1:
        raise DSPError("out_length must be >= 1")

    win = _analysis_window(cfg)
    frames = np.fft.irfft(spec.T, n=cfg.n_fft, axis=1) * win
    ola_len = (n_frames - 1) * cfg.hop_length + cfg.n_fft
    num = np.zeros(ola_len)
    den = np.zeros(ola_len)
    win_sq = win * win
    for t in range(n_frames):
        start = t * cfg.hop_length
        num[start : start + cfg.n_fft] += frames[t]
        den[start : start + cfg.n_fft] += win_sq

    if cfg.centered:
        padded_len = out_length + 2 * (cfg.n_fft // 2)
    else:
        padded_len = max(out_length, cfg.n_fft)
    padded_len = max(padded_len, ola_len)
    idx = _fold_index(out_length, padded_len, cfg)
    num = np.pad(num, (0, padded_len - ola_len))
    den = np.pad(den, (0, padded_len - ola_len))
    keep = idx >= 0
    y_num = np.bincount(idx[keep], weights=num[keep], minlength=out_length)
    y_den = np.bincount(idx[keep], weights=den[keep], minlength=out_length)

    tiny = np.finfo(np.float64).tiny
    empty = y_den <= tiny
    if np.any(empty & (np.abs(y_num) > 0)):
        raise DSPError("overlap-add normalization is zero where the spectrogram carries energy")
    y = np.zeros(out_length)
    np.divide(y_num, y_den, out=y, where=~empty)
    return y


def stft(clip: AudioClip, cfg: StftConfig) -> ComplexSpectrogram:
    if len(clip) < 1:
        raise DSPError("clip must contain at least one sample")
    return ComplexSpectrogram(stft_array(clip.samples, cfg), cfg)


def istft(
    spec: ComplexSpectrogram, cfg: StftConfig, out_length: int | None = None, sample_rate: int = 16000
) -> AudioClip:
    return AudioClip(istft_array(spec.values, cfg, out_length), sample_rate)


# Slaney mel scale: linear below 1 kHz, logarithmic above.
_F_SP = 200.0 / 3
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = math.log(6.4) / 27.0


def hz_to_mel(freqs):
    freqs = np.asarray(freqs, dtype=np.float64)
    mels = freqs / _F_SP
    log_region = freqs >= _MIN_LOG_HZ
    safe = np.where(log_region, freqs, _MIN_LOG_HZ)
    return np.where(log_region, _MIN_LOG_MEL + np.log(safe / _MIN_LOG_HZ) / _LOGSTEP, mels)


def mel_to_hz(mels):
    mels = np.asarray(mels, dtype=np.float64)
    freqs = _F_SP * mels
    log_region = mels >= _MIN_LOG_MEL
    return np.where(log_region, _MIN_LOG_HZ * np.exp(_LOGSTEP * (mels - _MIN_LOG_MEL)), freqs)


@functools.lru_cache(maxsize=32)
def mel_filterbank(
    sample_rate: int, n_fft: int, n_mels: int, f_min: float = 0.0, f_max: float | None = None
) -> MelFilterbank:
    """Triangular Slaney-normalized filters, shape ``(n_mels, n_fft//2 + 1)``.

    Cached; the returned arrays are read-only.
    """
    if f_max is None:
        f_max = sample_rate / 2.0
    if not (0 <= f_min < f_max <= sample_rate / 2.0):
        raise DSPError(f"need 0 <= f_min < f_max <= sample_rate/2, got {f_min}, {f_max}")
    if n_mels < 1:
        raise DSPError("n_mels must be >= 1")

    fft_freqs = np.linspace(0.0, sample_rate / 2.0, n_fft // 2 + 1)
    mel_pts = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fdiff = np.diff(hz_pts)
    ramps = hz_pts[:, None] - fft_freqs[None, :]

    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (hz_pts[2:] - hz_pts[:-2]))[:, None]

    empty = np.flatnonzero(~np.any(weights > 0, axis=1))
    if empty.size:
        raise DSPError(
            f"{empty.size} mel filters have no FFT bin in their support "
            f"(first: row {empty[0]}); lower n_mels or raise n_fft"
        )
    weights.setflags(write=False)
    centers = hz_pts[1:-1].copy()
    centers.setflags(write=False)
    return MelFilterbank(weights, int(sample_rate), float(f_min), float(f_max), centers)


def apply_filterbank(power_spec: np.ndarray, fb: MelFilterbank) -> np.ndarray:
    power_spec = np.asarray(power_spec, dtype=np.float64)
    if power_spec.ndim != 2 or power_spec.shape[0] != fb.n_bins:
        raise DSPError(f"power spectrogram needs {fb.n_bins} bins, got shape {power_spec.shape}")
    if np.any(power_spec < 0):
        raise DSPError("power spectrogram entries must be non-negative")
    return fb.weights @ power_spec


def _lipschitz(weights: np.ndarray, n_iter: int = 200) -> float:
    """Largest eigenvalue of W^T W by power iteration (deterministic start)."""
    gram = weights @ weights.T
    v = np.ones(gram.shape[0]) / math.sqrt(gram.shape[0])
    lam = 0.0
    for _ in range(n_iter):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v = w / norm
        new_lam = float(v @ gram @ v)
        if abs(new_lam - lam) <= 1e-12 * new_lam:
            lam = new_lam
            break
        lam = new_lam
    # small safety margin keeps the step strictly inside the descent region
    return lam * (1.0 + 1e-9)


@functools.lru_cache(maxsize=32)
def _solver_operators(fb: MelFilterbank):
    W = sparse.csr_matrix(fb.weights)
    return W, W.T.tocsr(), _lipschitz(fb.weights)


def mel_to_linear(
    mel: np.ndarray,
    fb: MelFilterbank,
    max_iter: int = 1000,
    tol: float = 1e-10,
    history: list | None = None,
) -> np.ndarray:
    """Non-negative least-squares inversion of the mel projection.

    Solves ``min ||W x - m||^2, x >= 0`` for every frame with projected
    gradient steps of size ``1/L``. Frames are independent, so they are
    iterated together. If ``history`` is given, the total residual norm after
    each iteration is appended to it.
    """
    mel = np.asarray(mel, dtype=np.float64)
    if mel.ndim != 2 or mel.shape[0] != fb.n_mels:
        raise DSPError(f"mel matrix needs {fb.n_mels} rows, got shape {mel.shape}")
    if not np.all(np.isfinite(mel)):
        raise DSPError("mel matrix must be finite")
    if np.any(mel < 0):
        raise DSPError("mel matrix entries must be non-negative")

    x = np.zeros((fb.n_bins, mel.shape[1]))
    if not np.any(mel):
        return x
    W, Wt, lip = _solver_operators(fb)
    step = 1.0 / lip

    residual = W @ x - mel
    prev = float(np.linalg.norm(residual))
    for _ in range(max_iter):
        x = np.maximum(x - step * (Wt @ residual), 0.0)
        residual = W @ x - mel
        cur = float(np.linalg.norm(residual))
        if history is not None:
            history.append(cur)
        if prev == 0 or (prev - cur) <= tol * prev:
            break
        prev = cur
    return x
