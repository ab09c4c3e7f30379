"""Clip cleanup before encoding: spectral-gating denoise, silence trim, empty-sample test."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import median_filter, uniform_filter

from .dsp import AudioClip, DSPError, StftConfig, istft_array, stft_array
from .melpipe import MelConfig, forward_logmel

SILENCE = "silence"
DURATION = "duration"

_AMP_FLOOR = 1e-10


@dataclass(frozen=True)
class DenoiseParams:
    n_std_threshold: float = 1.5
    freq_smooth_bins: int = 4
    time_smooth_frames: int = 2
    prop_decrease: float = 1.0
    # half-width (bins) of the across-frequency median applied to the noise profile
    profile_smooth_bins: int = 16
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if not 0.0 <= self.prop_decrease <= 1.0:
            raise ValueError(f"prop_decrease must lie in [0, 1], got {self.prop_decrease}")
        if min(self.freq_smooth_bins, self.time_smooth_frames, self.profile_smooth_bins) < 0:
            raise ValueError("smoothing extents must be >= 0")


@dataclass(frozen=True)
class TrimParams:
    top_db: float = 60.0
    frame_length: int = 2048
    hop_length: int = 512

    def __post_init__(self):
        if self.top_db <= 0:
            raise ValueError("top_db must be positive")
        if self.frame_length < 1 or self.hop_length < 1:
            raise ValueError("frame_length and hop_length must be >= 1")


@dataclass(frozen=True)
class EmptyFilterParams:
    amplitude_threshold: float = -4.0
    fraction_threshold: float = 0.98
    min_duration: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.fraction_threshold <= 1.0:
            raise ValueError("fraction_threshold must lie in (0, 1]")
        if self.min_duration < 0:
            raise ValueError("min_duration must be >= 0")


@dataclass(frozen=True)
class PreprocessConfig:
    denoise: DenoiseParams = field(default_factory=DenoiseParams)
    trim: TrimParams = field(default_factory=TrimParams)
    empty: EmptyFilterParams = field(default_factory=EmptyFilterParams)
    mel: MelConfig = field(default_factory=MelConfig)


@dataclass(frozen=True)
class Verdict:
    """Outcome of the empty-sample test. ``cause`` is None for kept clips."""

    cause: str | None
    silent_fraction: float
    duration: float

    @property
    def kept(self) -> bool:
        return self.cause is None


@dataclass(frozen=True)
class PreprocessResult:
    clip: AudioClip | None
    verdict: Verdict
    trim_span: tuple[int, int]

    @property
    def kept(self) -> bool:
        return self.verdict.kept


def _to_db(mag: np.ndarray) -> np.ndarray:
    return 20.0 * np.log10(np.maximum(mag, _AMP_FLOOR))


def spectral_gate_denoise(clip: AudioClip, p: DenoiseParams | None = None) -> AudioClip:
    """Stationary spectral gating over whole-clip statistics.

    Per frequency bin the noise threshold is ``mean_db + n_std * std_db``
    (statistics over frames). Both statistics are median-smoothed across
    frequency first, so a steady narrowband component stands out against
    its neighbours instead of being mistaken for the noise floor. The binary
    above-threshold mask is box-smoothed (never below its binary value) and
    masked-out energy is scaled by ``1 - prop_decrease`` before resynthesis.
    """
    p = p or DenoiseParams()
    cfg = p.stft
    x = clip.samples
    n = len(clip)
    min_len = cfg.n_fft // 2 + 1 if cfg.centered else cfg.n_fft
    if n < min_len:
        raise DSPError(f"clip of {n} samples is shorter than one STFT frame ({min_len})")
    if not np.any(x):
        return AudioClip(np.zeros(n), clip.sample_rate)

    spec = stft_array(x, cfg)
    db = _to_db(np.abs(spec))
    mean_db = db.mean(axis=1)
    std_db = db.std(axis=1)
    if p.profile_smooth_bins:
        size = 2 * p.profile_smooth_bins + 1
        mean_db = median_filter(mean_db, size=size, mode="nearest")
        std_db = median_filter(std_db, size=size, mode="nearest")
    threshold = mean_db + p.n_std_threshold * std_db
    mask = (db > threshold[:, None]).astype(np.float64)

    if p.freq_smooth_bins or p.time_smooth_frames:
        kernel = (2 * p.freq_smooth_bins + 1, 2 * p.time_smooth_frames + 1)
        # smoothing softens mask edges but never attenuates an above-threshold cell
        smoothed = uniform_filter(mask, size=kernel, mode="constant")
        mask = np.clip(np.maximum(mask, smoothed), 0.0, 1.0)
    gain = mask + (1.0 - mask) * (1.0 - p.prop_decrease)

    y = istft_array(spec * gain, cfg, out_length=n)
    return AudioClip(y, clip.sample_rate)


def frame_rms(x: np.ndarray, frame_length: int, hop_length: int) -> np.ndarray:
    """Centered (zero-padded) frame RMS, one value per hop."""
    pad = frame_length // 2
    padded = np.pad(x, pad)
    n_frames = 1 + len(x) // hop_length
    if padded.shape[0] < frame_length:
        padded = np.pad(padded, (0, frame_length - padded.shape[0]))
    frames = np.lib.stride_tricks.sliding_window_view(padded, frame_length)[::hop_length][:n_frames]
    return np.sqrt(np.mean(frames * frames, axis=1))


def trim_silence(clip: AudioClip, p: TrimParams | None = None) -> tuple[AudioClip, int, int]:
    """Drop leading/trailing frames more than ``top_db`` below the loudest frame.

    Returns the trimmed clip and the ``[start, end)`` span it occupies in the
    input. An all-silent clip comes back empty with ``start == end``.
    """
    p = p or TrimParams()
    x = clip.samples
    if len(x) == 0:
        return clip, 0, 0
    rms = frame_rms(x, p.frame_length, p.hop_length)
    peak = rms.max()
    if peak <= 0:
        return AudioClip(x[:0], clip.sample_rate), 0, 0
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(rms / peak)
    loud = np.flatnonzero(db > -p.top_db)
    start = min(int(loud[0]) * p.hop_length, len(x))
    end = min((int(loud[-1]) + 1) * p.hop_length, len(x))
    return AudioClip(x[start:end], clip.sample_rate), start, end


def is_empty_sample(logmel, duration_s: float, p: EmptyFilterParams | None = None) -> Verdict:
    """Reject when most of the log-mel sits below the amplitude threshold, or the clip is too short.

    ``logmel`` may be a LogMelSpectrogram or a plain matrix. When both causes
    apply, silence is reported.
    """
    p = p or EmptyFilterParams()
    values = np.asarray(getattr(logmel, "values", logmel), dtype=np.float64)
    fraction = float(np.mean(values < p.amplitude_threshold)) if values.size else 1.0
    if fraction >= p.fraction_threshold:
        cause = SILENCE
    elif duration_s <= p.min_duration:
        cause = DURATION
    else:
        cause = None
    return Verdict(cause, fraction, float(duration_s))


def preprocess_clip(clip: AudioClip, cfg: PreprocessConfig | None = None) -> PreprocessResult:
    """denoise -> trim -> log-mel of the trimmed clip -> empty-sample test.

    A clip that trims to nothing is judged on the log-mel of the whole
    (denoised) clip, since every frame of it was silent.
    """
    cfg = cfg or PreprocessConfig()
    stft_cfg = cfg.denoise.stft
    too_short = len(clip) < (stft_cfg.n_fft // 2 + 1 if stft_cfg.centered else stft_cfg.n_fft)
    if too_short and clip.duration <= cfg.empty.min_duration:
        # shorter than one analysis frame and already under the duration floor
        return PreprocessResult(None, Verdict(DURATION, float("nan"), clip.duration), (0, len(clip)))
    denoised = spectral_gate_denoise(clip, cfg.denoise)
    trimmed, start, end = trim_silence(denoised, cfg.trim)
    judged = trimmed if len(trimmed) else denoised
    logmel = forward_logmel(judged, cfg.mel)
    verdict = is_empty_sample(logmel, trimmed.duration, cfg.empty)
    return PreprocessResult(trimmed if verdict.kept else None, verdict, (start, end))
