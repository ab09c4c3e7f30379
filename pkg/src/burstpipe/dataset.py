"""Corpus manifests: CSV ingestion, per-emotion selection and rejection bookkeeping."""

from __future__ import annotations

import csv
import enum
import io
import os
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from .dsp import StftConfig
from .melpipe import MelConfig, ValueRange


class ManifestError(ValueError):
    pass


class Emotion(str, enum.Enum):
    AMUSEMENT = "amusement"
    AWE = "awe"
    AWKWARDNESS = "awkwardness"
    DISTRESS = "distress"
    EXCITEMENT = "excitement"
    FEAR = "fear"
    HORROR = "horror"
    SADNESS = "sadness"
    SURPRISE = "surprise"
    TRIUMPH = "triumph"

    @classmethod
    def parse(cls, name: str) -> "Emotion":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ManifestError(f"unknown emotion {name!r}") from None


EMOTIONS = tuple(Emotion)
SPLITS = ("train", "validation", "test", "unlabeled")
SPLIT_PRESETS = {
    "unconditional-all": frozenset(SPLITS),
    "conditional-trainval": frozenset({"train", "validation"}),
}

RAW, KEPT, FAILED = "raw", "kept", "failed"
_REJECTED_PREFIX = "rejected:"


def rejected(cause: str) -> str:
    return _REJECTED_PREFIX + cause


def rejection_cause(status: str) -> str | None:
    return status[len(_REJECTED_PREFIX):] if status.startswith(_REJECTED_PREFIX) else None


@dataclass(frozen=True)
class SampleRecord:
    id: str
    audio_path: str
    split: str
    scores: Mapping[Emotion, float] = field(default_factory=dict)
    status: str = RAW

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ManifestError(f"record {self.id!r}: unknown split {self.split!r}")
        for e, v in self.scores.items():
            if not 0.0 <= v <= 1.0:
                raise ManifestError(f"record {self.id!r}: {e.value} score {v} outside [0, 1]")
        if self.status not in (RAW, KEPT, FAILED) and rejection_cause(self.status) is None:
            raise ManifestError(f"record {self.id!r}: unknown status {self.status!r}")


@dataclass(frozen=True)
class Manifest:
    records: tuple[SampleRecord, ...] = ()
    mel_config: MelConfig | None = None
    value_range: ValueRange | None = None
    notes: tuple[str, ...] = ()
    base_dir: Path | None = None

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise ManifestError(f"duplicate record id {r.id!r}")
            seen.add(r.id)

    def by_id(self) -> dict[str, SampleRecord]:
        return {r.id: r for r in self.records}

    def resolve(self, record: SampleRecord) -> Path:
        p = Path(record.audio_path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    def rejection_summary(self) -> Counter:
        return Counter(c for c in (rejection_cause(r.status) for r in self.records) if c)


# -- metadata block -------------------------------------------------------

def _meta_from_config(cfg: MelConfig) -> list[tuple[str, str]]:
    s = cfg.stft
    return [
        ("mel.sample_rate", str(cfg.sample_rate)),
        ("mel.n_fft", str(s.n_fft)),
        ("mel.win_length", str(s.win_length)),
        ("mel.hop_length", str(s.hop_length)),
        ("mel.window", s.window),
        ("mel.centered", "true" if s.centered else "false"),
        ("mel.n_mels", str(cfg.n_mels)),
        ("mel.f_min", repr(float(cfg.f_min))),
        ("mel.f_max", "" if cfg.f_max is None else repr(float(cfg.f_max))),
        ("mel.target_frames", "" if cfg.target_frames is None else str(cfg.target_frames)),
        ("mel.pad_power_value", repr(float(cfg.pad_power_value))),
    ]


def _config_from_meta(meta: dict[str, str]) -> MelConfig | None:
    if not any(k.startswith("mel.") for k in meta):
        return None
    d = MelConfig()
    try:
        stft = StftConfig(
            n_fft=int(meta.get("mel.n_fft", d.stft.n_fft)),
            win_length=int(meta.get("mel.win_length", d.stft.win_length)),
            hop_length=int(meta.get("mel.hop_length", d.stft.hop_length)),
            window=meta.get("mel.window", d.stft.window),
            centered=meta.get("mel.centered", "true").lower() == "true",
        )
        f_max = meta.get("mel.f_max", "")
        return MelConfig(
            sample_rate=int(meta.get("mel.sample_rate", d.sample_rate)),
            stft=stft,
            n_mels=int(meta.get("mel.n_mels", d.n_mels)),
            f_min=float(meta.get("mel.f_min", d.f_min)),
            f_max=float(f_max) if f_max else None,
            target_frames=int(meta["mel.target_frames"]) if meta.get("mel.target_frames") else None,
            pad_power_value=float(meta.get("mel.pad_power_value", d.pad_power_value)),
        )
    except ValueError as exc:
        raise ManifestError(f"bad mel metadata: {exc}") from exc


# -- CSV ------------------------------------------------------------------

def _parse_score(raw: str, where: str) -> float | None:
    raw = raw.strip()
    if not raw:
        return None
    try:
        return float(raw)
    except ValueError:
        raise ManifestError(f"{where}: score {raw!r} is not a number") from None


def parse_manifest(text: str, source: str = "<manifest>", base_dir: Path | None = None) -> Manifest:
    meta: dict[str, str] = {}
    notes: list[str] = []
    body_lines: list[tuple[int, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#"):
            entry = line[1:].strip()
            if "=" in entry:
                k, v = entry.split("=", 1)
                k = k.strip()
                if k == "note":
                    notes.append(v.strip())
                else:
                    meta[k] = v.strip()
            continue
        if line.strip():
            body_lines.append((lineno, line))

    mel_config = _config_from_meta(meta)
    value_range = None
    if "range.low" in meta or "range.high" in meta:
        try:
            value_range = ValueRange(float(meta["range.low"]), float(meta["range.high"]))
        except (KeyError, ValueError) as exc:
            raise ManifestError(f"{source}: bad value range metadata ({exc})") from exc

    if not body_lines:
        return Manifest((), mel_config, value_range, tuple(notes), base_dir)

    header_no, header_line = body_lines[0]
    header = next(csv.reader([header_line]))
    header = [h.strip() for h in header]
    for col in ("id", "audio_path", "split"):
        if col not in header:
            raise ManifestError(f"{source}:{header_no}: header lacks column {col!r}")
    emotion_cols = {}
    for h in header:
        if h in ("id", "audio_path", "split", "status", "scores"):
            continue
        emotion_cols[h] = Emotion.parse(h)

    records = []
    seen: dict[str, int] = {}
    for lineno, line in body_lines[1:]:
        where = f"{source}:{lineno}"
        cells = next(csv.reader([line]))
        if len(cells) != len(header):
            raise ManifestError(f"{where}: expected {len(header)} fields, got {len(cells)}")
        row = dict(zip(header, cells))
        rid = row["id"].strip()
        if not rid:
            raise ManifestError(f"{where}: empty id")
        if rid in seen:
            raise ManifestError(f"{where}: duplicate id {rid!r} (first on line {seen[rid]})")
        seen[rid] = lineno
        scores: dict[Emotion, float] = {}
        for col, emo in emotion_cols.items():
            v = _parse_score(row[col], where)
            if v is not None:
                scores[emo] = v
        for pair in filter(None, (p.strip() for p in row.get("scores", "").split(";"))):
            if "=" not in pair:
                raise ManifestError(f"{where}: score entry {pair!r} is not emotion=value")
            name, v = pair.split("=", 1)
            try:
                emo = Emotion.parse(name)
            except ManifestError as exc:
                raise ManifestError(f"{where}: {exc}") from None
            value = _parse_score(v, where)
            if value is not None:
                scores[emo] = value
        try:
            records.append(
                SampleRecord(
                    rid,
                    row["audio_path"].strip(),
                    row["split"].strip(),
                    scores,
                    row.get("status", "").strip() or RAW,
                )
            )
        except ManifestError as exc:
            raise ManifestError(f"{where}: {exc}") from None
    return Manifest(tuple(records), mel_config, value_range, tuple(notes), base_dir)


def load_manifest(path: str | os.PathLike) -> Manifest:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    return parse_manifest(text, str(path), path.parent)


def format_manifest(m: Manifest) -> str:
    out = io.StringIO()
    for note in m.notes:
        out.write(f"# note={note}\n")
    if m.mel_config is not None:
        for k, v in _meta_from_config(m.mel_config):
            out.write(f"# {k}={v}\n")
    if m.value_range is not None:
        out.write(f"# range.low={m.value_range.low!r}\n")
        out.write(f"# range.high={m.value_range.high!r}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["id", "audio_path", "split", *(e.value for e in EMOTIONS), "status"])
    for r in m.records:
        w.writerow(
            [
                r.id,
                r.audio_path,
                r.split,
                *("" if e not in r.scores else repr(float(r.scores[e])) for e in EMOTIONS),
                r.status,
            ]
        )
    return out.getvalue()


def save_manifest(m: Manifest, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_manifest(m))


# -- selection and rejections --------------------------------------------

def select_emotion(
    m: Manifest, emotion: Emotion | str, splits: Iterable[str] | str = "conditional-trainval", tolerance: float = 0.0
) -> list[SampleRecord]:
    """Kept records in ``splits`` whose score for ``emotion`` is 1, sorted by id.

    ``splits`` may be a preset name from :data:`SPLIT_PRESETS`.
    """
    emotion = Emotion.parse(emotion) if isinstance(emotion, str) else emotion
    if isinstance(splits, str):
        if splits not in SPLIT_PRESETS:
            raise ManifestError(f"unknown split preset {splits!r}")
        splits = SPLIT_PRESETS[splits]
    splits = frozenset(splits)
    chosen = [
        r
        for r in m.records
        if r.status == KEPT
        and r.split in splits
        and emotion in r.scores
        and abs(r.scores[emotion] - 1.0) <= tolerance
    ]
    return sorted(chosen, key=lambda r: r.id)


def record_rejections(m: Manifest, verdicts: Mapping[str, object]) -> tuple[Manifest, Counter]:
    """Apply per-id outcomes and return the updated manifest with per-cause counts.

    A verdict is either a cause string (``None`` meaning kept) or any object
    with a ``cause`` attribute. Counts cover every rejected record of the
    resulting manifest.
    """
    index = m.by_id()
    unknown = sorted(set(verdicts) - set(index))
    if unknown:
        raise ManifestError(f"verdicts for unknown ids: {', '.join(unknown)}")
    updated = []
    for r in m.records:
        if r.id in verdicts:
            v = verdicts[r.id]
            cause = getattr(v, "cause", v)
            r = replace(r, status=KEPT if cause is None else rejected(str(cause)))
        updated.append(r)
    new = replace(m, records=tuple(updated))
    return new, new.rejection_summary()
