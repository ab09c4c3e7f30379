"""Vocal-burst audio <-> mel-spectrogram image pipeline with Frechet/HEEP scoring."""

from .dsp import AudioClip, MelFilterbank, StftConfig, istft, mel_filterbank, mel_to_linear, stft
from .inversion import GriffinLimConfig, griffin_lim, invert_image, invert_logmel
from .melpipe import LogMelSpectrogram, MelConfig, SpectrogramImage, ValueRange, dequantize, forward_logmel, quantize
from .metrics import EvalReport, frechet_distance, heep, s_gen

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "EvalReport",
    "GriffinLimConfig",
    "LogMelSpectrogram",
    "MelConfig",
    "MelFilterbank",
    "SpectrogramImage",
    "StftConfig",
    "ValueRange",
    "dequantize",
    "forward_logmel",
    "frechet_distance",
    "griffin_lim",
    "heep",
    "invert_image",
    "invert_logmel",
    "istft",
    "mel_filterbank",
    "mel_to_linear",
    "quantize",
    "s_gen",
    "stft",
]
