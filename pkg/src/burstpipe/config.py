"""Run configuration: one validated object for every tunable, loaded from TOML/JSON plus overrides."""

from __future__ import annotations

import dataclasses
import json
import os
import sys
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dsp import DSPError, StftConfig
from .inversion import GriffinLimConfig, NNLSConfig
from .melpipe import MelConfig, MelPipeError
from .preprocess import DenoiseParams, EmptyFilterParams, PreprocessConfig, TrimParams

HEEP_MODES = ("per-emotion", "overall")
WAV_FORMATS = ("pcm16", "float32")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MetricFlags:
    heep_mode: str = "per-emotion"
    regularize: bool = False
    embeddings_have_id: bool = False


@dataclass(frozen=True)
class GeneratorFlags:
    k: int = 32
    split_preset: str = "conditional-trainval"
    score_tolerance: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    mel: MelConfig = field(default_factory=MelConfig)
    denoise: DenoiseParams = field(default_factory=DenoiseParams)
    trim: TrimParams = field(default_factory=TrimParams)
    empty: EmptyFilterParams = field(default_factory=EmptyFilterParams)
    griffin_lim: GriffinLimConfig = field(default_factory=GriffinLimConfig)
    nnls: NNLSConfig = field(default_factory=NNLSConfig)
    metrics: MetricFlags = field(default_factory=MetricFlags)
    generator: GeneratorFlags = field(default_factory=GeneratorFlags)
    threads: int = 1
    seed: int = 0
    wav_format: str = "pcm16"

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(self.denoise, self.trim, self.empty, self.mel)

    def effective_threads(self) -> int:
        cap = os.environ.get("BURSTPIPE_THREADS")
        threads = self.threads
        if cap:
            try:
                threads = min(threads, max(1, int(cap)))
            except ValueError:
                raise ConfigError(f"BURSTPIPE_THREADS must be an integer, got {cap!r}") from None
        return max(1, threads)

    def item_seed(self, key: str) -> int:
        """Per-item seed: the run seed XOR a stable hash of the item name."""
        return (self.seed ^ zlib.crc32(key.encode("utf-8"))) & 0xFFFFFFFF


# section name -> (fields owned by the section, fields of the shared STFT)
_STFT_KEYS = ("n_fft", "win_length", "hop_length", "window", "centered")
_SECTIONS = {
    "mel": ("sample_rate", "n_mels", "f_min", "f_max", "target_frames", "pad_power_value") + _STFT_KEYS,
    "denoise": ("n_std_threshold", "freq_smooth_bins", "time_smooth_frames", "prop_decrease", "profile_smooth_bins"),
    "trim": ("top_db", "frame_length", "hop_length"),
    "empty": ("amplitude_threshold", "fraction_threshold", "min_duration"),
    "griffin_lim": ("n_iter", "momentum"),
    "nnls": ("max_iter", "tol"),
    "metrics": ("heep_mode", "regularize", "embeddings_have_id"),
    "generator": ("k", "split_preset", "score_tolerance"),
}
_TOP_LEVEL = ("threads", "seed", "wav_format")


def to_dict(cfg: RunConfig) -> dict[str, Any]:
    out: dict[str, Any] = {k: getattr(cfg, k) for k in _TOP_LEVEL}
    mel = {k: getattr(cfg.mel, k) for k in _SECTIONS["mel"] if k not in _STFT_KEYS}
    mel.update({k: getattr(cfg.mel.stft, k) for k in _STFT_KEYS})
    out["mel"] = mel
    for section in _SECTIONS:
        if section != "mel":
            obj = getattr(cfg, section)
            out[section] = {k: getattr(obj, k) for k in _SECTIONS[section]}
    return out


def from_dict(data: Mapping[str, Any]) -> RunConfig:
    """Build and validate a RunConfig; unknown sections or keys raise :class:`ConfigError`."""
    unknown = set(data) - set(_SECTIONS) - set(_TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for section, keys in _SECTIONS.items():
        body = data.get(section, {})
        if not isinstance(body, Mapping):
            raise ConfigError(f"section [{section}] must be a table")
        bad = set(body) - set(keys)
        if bad:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(bad))}")

    def sec(name):
        return dict(data.get(name, {}))

    try:
        mel_in = sec("mel")
        stft = StftConfig(**{k: mel_in.pop(k) for k in _STFT_KEYS if k in mel_in})
        mel = MelConfig(stft=stft, **mel_in)
        mel.filterbank()
        cfg = RunConfig(
            mel=mel,
            denoise=DenoiseParams(stft=stft, **sec("denoise")),
            trim=TrimParams(**sec("trim")),
            empty=EmptyFilterParams(**sec("empty")),
            griffin_lim=GriffinLimConfig(stft=stft, seed=int(data.get("seed", 0)), **sec("griffin_lim")),
            nnls=NNLSConfig(**sec("nnls")),
            metrics=MetricFlags(**sec("metrics")),
            generator=GeneratorFlags(**sec("generator")),
            **{k: data[k] for k in _TOP_LEVEL if k in data},
        )
    except (TypeError, ValueError, DSPError, MelPipeError) as exc:
        raise ConfigError(str(exc)) from exc

    if cfg.metrics.heep_mode not in HEEP_MODES:
        raise ConfigError(f"metrics.heep_mode must be one of {HEEP_MODES}")
    if cfg.wav_format not in WAV_FORMATS:
        raise ConfigError(f"wav_format must be one of {WAV_FORMATS}")
    if not isinstance(cfg.threads, int) or cfg.threads < 1:
        raise ConfigError("threads must be a positive integer")
    if cfg.nnls.max_iter < 1 or cfg.nnls.tol < 0:
        raise ConfigError("nnls.max_iter must be >= 1 and nnls.tol >= 0")
    if cfg.generator.k < 0:
        raise ConfigError("generator.k must be >= 0")
    from .dataset import SPLIT_PRESETS

    if cfg.generator.split_preset not in SPLIT_PRESETS:
        raise ConfigError(f"generator.split_preset must be one of {sorted(SPLIT_PRESETS)}")
    return cfg


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply ``section.key=value`` / ``key=value`` strings (values parsed as JSON when possible)."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) == 1:
            data[parts[0]] = _parse_value(raw)
        elif len(parts) == 2:
            data.setdefault(parts[0], {})[parts[1]] = _parse_value(raw)
        else:
            raise ConfigError(f"override key {key!r} is nested too deeply")
    return data


def load_config(path: str | os.PathLike | None = None, overrides: list[str] | None = None) -> RunConfig:
    data: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        try:
            data = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"{p}: {exc}") from exc
    if overrides:
        data = apply_overrides(data, overrides)
    return from_dict(data)


def write_effective(cfg: RunConfig, out_dir: str | os.PathLike) -> Path:
    path = Path(out_dir) / "effective_config.json"
    path.write_text(json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def replace_mel(cfg: RunConfig, mel: MelConfig) -> RunConfig:
    """Swap the mel settings (and the STFT shared with denoise/Griffin-Lim)."""
    return dataclasses.replace(
        cfg,
        mel=mel,
        denoise=dataclasses.replace(cfg.denoise, stft=mel.stft),
        griffin_lim=dataclasses.replace(cfg.griffin_lim, stft=mel.stft),
    )
