"""``burstpipe`` batch front end.

Exit codes: 0 success, 1 some items failed (the rest were processed),
2 configuration or validation error (nothing was processed).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from PIL import Image

from . import baseline, plotting
from .audio_io import AudioIOError, read_wav, resample, write_wav
from .config import ConfigError, RunConfig, load_config, replace_mel, to_dict, write_effective
from .dataset import (
    EMOTIONS,
    FAILED,
    KEPT,
    RAW,
    SPLIT_PRESETS,
    Emotion,
    Manifest,
    ManifestError,
    load_manifest,
    record_rejections,
    save_manifest,
    select_emotion,
)
from .dsp import DSPError
from .inversion import invert_image
from .melpipe import MelPipeError, ValueRange, dataset_range, encode_clip, forward_logmel, load_png, quantize, save_png
from .metrics import EmotionScores, EvalReport, MetricError, RatingMatrices, accumulate_stats, frechet_distance, heep, load_embeddings, logmel_embedding
from .preprocess import preprocess_clip
from .viridis import apply_viridis

log = logging.getLogger("burstpipe")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
_ITEM_ERRORS = (OSError, AudioIOError, DSPError, MelPipeError, ValueError)


class UsageError(Exception):
    """Bad inputs detected before any work starts."""


def parallel_map(fn: Callable, items: Sequence, threads: int) -> list:
    """Ordered map; results never depend on the thread count."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _load_clip(path: Path, cfg: RunConfig):
    return resample(read_wav(path), cfg.mel.sample_rate)


def _guard(fn):
    """Run ``fn(item)``; turn per-item failures into ``(None, message)``."""

    def wrapped(item):
        try:
            return fn(item), None
        except _ITEM_ERRORS as exc:
            return None, str(exc)

    return wrapped


# -- preprocess -----------------------------------------------------------

def cmd_preprocess(manifest_path, cfg: RunConfig, out_dir) -> int:
    out_dir = Path(out_dir)
    m = load_manifest(manifest_path)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    write_effective(cfg, out_dir)
    pcfg = cfg.preprocess_config()

    def work(rec):
        clip = _load_clip(m.resolve(rec), cfg)
        result = preprocess_clip(clip, pcfg)
        if result.kept:
            write_wav(out_dir / "audio" / f"{rec.id}.wav", result.clip, cfg.wav_format)
        return result

    outcomes = parallel_map(_guard(work), list(m.records), cfg.effective_threads())

    verdicts, failed, rows = {}, {}, []
    for rec, (result, err) in zip(m.records, outcomes):
        if err is not None:
            failed[rec.id] = err
            log.error("%s: %s", rec.id, err)
            continue
        verdicts[rec.id] = result.verdict
        if not result.kept:
            rows.append((rec.id, result.verdict.cause, result.verdict.silent_fraction, result.verdict.duration))
    new, summary = record_rejections(m, verdicts)

    records = []
    for rec in new.records:
        if rec.id in failed:
            rec = dataclasses.replace(rec, status=FAILED, audio_path=str(m.resolve(rec).resolve()))
        elif rec.status == KEPT:
            rec = dataclasses.replace(rec, audio_path=f"audio/{rec.id}.wav")
        else:
            rec = dataclasses.replace(rec, audio_path=str(m.resolve(rec).resolve()))
        records.append(rec)
    out = dataclasses.replace(
        new,
        records=tuple(records),
        mel_config=cfg.mel,
        value_range=None,
        notes=new.notes + (f"preprocessed from {Path(manifest_path).name}",),
        base_dir=out_dir,
    )
    save_manifest(out, out_dir / "manifest.csv")
    with open(out_dir / "rejections.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "cause", "silent_fraction", "duration_s"])
        for rid, cause, frac, dur in rows:
            w.writerow([rid, cause, format(frac, ".6g"), format(dur, ".6g")])

    kept = sum(r.status == KEPT for r in out.records)
    parts = [f"kept={kept}"] + [f"{c}={summary[c]}" for c in sorted(summary)] + [f"failed={len(failed)}"]
    print("preprocess: " + " ".join(parts))
    return EXIT_PARTIAL if failed else EXIT_OK


# -- melspec --------------------------------------------------------------

def cmd_melspec(manifest_path, cfg: RunConfig, out_dir, include_raw: bool = False, figures: bool = True) -> int:
    out_dir = Path(out_dir)
    m = load_manifest(manifest_path)
    eligible = (KEPT, RAW) if include_raw else (KEPT,)
    records = [r for r in m.records if r.status in eligible]
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    write_effective(cfg, out_dir)
    if not cfg.mel.canonical:
        log.warning("mel config %dx%d is not one of the canonical square sizes", cfg.mel.n_mels, cfg.mel.frames)

    outcomes = parallel_map(
        _guard(lambda rec: encode_clip(_load_clip(m.resolve(rec), cfg), cfg.mel)),
        records,
        cfg.effective_threads(),
    )
    good = []
    failed = 0
    for rec, (lm, err) in zip(records, outcomes):
        if err is not None:
            failed += 1
            log.error("%s: %s", rec.id, err)
        else:
            good.append((rec, lm))

    value_range = None
    if good:
        try:
            value_range = dataset_range(lm for _, lm in good)
        except MelPipeError as exc:
            raise UsageError(f"cannot build image range: {exc}") from exc
        for rec, lm in good:
            save_png(quantize(lm, value_range), out_dir / "images" / f"{rec.id}.png")

    status = {rec.id: FAILED for rec, (lm, err) in zip(records, outcomes) if err is not None}
    out_records = []
    for rec in m.records:
        rec = dataclasses.replace(rec, audio_path=str(m.resolve(rec).resolve()))
        if rec.id in status:
            rec = dataclasses.replace(rec, status=FAILED)
        out_records.append(rec)
    out = Manifest(
        tuple(out_records), cfg.mel, value_range, m.notes + ("spectrogram images in images/",), out_dir
    )
    save_manifest(out, out_dir / "manifest.csv")
    if figures and good:
        preview = [quantize(lm, value_range).pixels for _, lm in good[:12]]
        plotting.plot_grid(preview, out_dir / "preview.png", titles=[rec.id for rec, _ in good[:12]])
    print(f"melspec: images={len(good)} size={cfg.mel.n_mels}x{cfg.mel.frames} failed={failed}")
    return EXIT_PARTIAL if failed else EXIT_OK


# -- invert ---------------------------------------------------------------

def _manifest_mel(manifest_path, cfg: RunConfig) -> tuple[RunConfig, ValueRange]:
    m = load_manifest(manifest_path)
    if m.value_range is None:
        raise UsageError(f"{manifest_path}: no value range metadata; run melspec first")
    if m.mel_config is not None:
        cfg = replace_mel(cfg, m.mel_config)
    return cfg, m.value_range


def cmd_invert(image_dir, manifest_path, cfg: RunConfig, out_dir) -> int:
    out_dir = Path(out_dir)
    cfg, value_range = _manifest_mel(manifest_path, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_effective(cfg, out_dir)
    imported = baseline.import_images(image_dir, (cfg.mel.n_mels, cfg.mel.frames), value_range, cfg.mel)
    for name, cause in imported.rejected:
        log.error("skipping %s", cause)

    def work(pair):
        name, img = pair
        gl = dataclasses.replace(cfg.griffin_lim, seed=cfg.item_seed(name))
        clip = invert_image(img, cfg.mel, gl, cfg.nnls)
        write_wav(out_dir / (Path(name).stem + ".wav"), clip, cfg.wav_format)

    outcomes = parallel_map(_guard(work), list(zip(imported.names, imported.images)), cfg.effective_threads())
    errors = [(n, e) for n, (_, e) in zip(imported.names, outcomes) if e is not None]
    for name, err in errors:
        log.error("%s: %s", name, err)
    n_ok = len(imported.images) - len(errors)
    print(f"invert: wavs={n_ok} skipped={len(imported.rejected)} failed={len(errors)}")
    return EXIT_PARTIAL if (imported.rejected or errors) else EXIT_OK


# -- generate -------------------------------------------------------------

def cmd_generate(
    cfg: RunConfig,
    out_dir,
    emotion: str,
    n: int,
    model_path=None,
    manifest_path=None,
    image_dir=None,
    save_model_path=None,
) -> int:
    out_dir = Path(out_dir)
    emotion = Emotion.parse(emotion).value
    if n < 0:
        raise UsageError("n must be >= 0")
    if model_path is not None:
        try:
            model = baseline.load_model(model_path, cfg.mel)
        except (OSError, baseline.ModelError) as exc:
            raise UsageError(str(exc)) from exc
        if model.emotion and model.emotion != emotion:
            raise UsageError(f"model was fitted for {model.emotion!r}, not {emotion!r}")
    else:
        if manifest_path is None:
            raise UsageError("generate needs --model or --manifest")
        m = load_manifest(manifest_path)
        if m.value_range is None:
            raise UsageError(f"{manifest_path}: no value range metadata; run melspec first")
        image_dir = Path(image_dir) if image_dir is not None else Path(manifest_path).parent / "images"
        chosen = select_emotion(m, emotion, cfg.generator.split_preset, cfg.generator.score_tolerance)
        try:
            images = [load_png(image_dir / f"{r.id}.png", m.value_range, source_id=r.id) for r in chosen]
            model = baseline.fit(images, cfg.generator.k, emotion, m.mel_config)
        except (MelPipeError, baseline.ModelError) as exc:
            raise UsageError(str(exc)) from exc
        if m.mel_config is not None:
            cfg = replace_mel(cfg, m.mel_config)
    if save_model_path is not None:
        baseline.save_model(model, save_model_path)

    out_dir.mkdir(parents=True, exist_ok=True)
    write_effective(cfg, out_dir)
    samples = baseline.sample(model, n, cfg.item_seed(emotion))
    for i, img in enumerate(samples):
        save_png(img, out_dir / f"{emotion}_{i:05d}.png")
    save_manifest(
        Manifest((), cfg.mel, model.range, (f"generated {n} {emotion} images",), out_dir),
        out_dir / "manifest.csv",
    )
    print(f"generate: emotion={emotion} images={len(samples)}")
    return EXIT_OK


# -- evaluate -------------------------------------------------------------

def _split_spec(spec: str) -> tuple[str, str]:
    key, sep, path = spec.partition("=")
    if sep and key and not os.path.exists(spec):
        return Emotion.parse(key).value if key != "all" else "all", path
    return "all", spec


def _embed_source(path: str, cfg: RunConfig) -> np.ndarray:
    p = Path(path)
    if p.is_dir():
        wavs = sorted(p.glob("*.wav"))
        if not wavs:
            raise UsageError(f"{p}: no WAV files")

        def embed(w):
            return logmel_embedding(forward_logmel(_load_clip(w, cfg), cfg.mel))

        return np.stack(parallel_map(embed, wavs, cfg.effective_threads()))
    vectors, _ = load_embeddings(p, has_id=cfg.metrics.embeddings_have_id)
    return vectors


def _ordered(keys: Iterable[str]) -> list[str]:
    canon = [e.value for e in EMOTIONS]
    keys = set(keys)
    return [k for k in canon if k in keys] + sorted(keys - set(canon))


def load_ratings(path) -> RatingMatrices:
    """CSV with columns ``id,target,<emotion>...``; ``target`` names the intended emotion."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "target" not in fields:
            raise UsageError(f"{path}: ratings file needs a 'target' column")
        emotions = [Emotion.parse(f).value for f in fields if f not in ("id", "target")]
        T, H = [], []
        for lineno, row in enumerate(reader, start=2):
            target = Emotion.parse(row["target"]).value
            if target not in emotions:
                raise UsageError(f"{path}:{lineno}: target {target!r} has no rating column")
            T.append([1.0 if e == target else 0.0 for e in emotions])
            try:
                H.append([float(row[e]) for e in emotions])
            except (TypeError, ValueError) as exc:
                raise UsageError(f"{path}:{lineno}: bad rating ({exc})") from exc
    if not T:
        raise UsageError(f"{path}: no ratings")
    return RatingMatrices(np.array(T), np.array(H), tuple(emotions))


def cmd_evaluate(
    cfg: RunConfig, out_path, refs: Sequence[str] = (), cands: Sequence[str] = (), ratings=None, recompute=None
) -> int:
    out_path = Path(out_path)
    if recompute is not None:
        report = EvalReport.read_csv(recompute)
    else:
        ref_specs = dict(_split_spec(s) for s in refs)
        cand_specs = dict(_split_spec(s) for s in cands)
        if not ref_specs and ratings is None:
            raise UsageError("evaluate needs --ref/--cand pairs, --ratings, or --recompute")
        if set(ref_specs) != set(cand_specs):
            raise UsageError("every --ref emotion needs a matching --cand")
        report = EvalReport()
        fads = {}
        for key in _ordered(ref_specs):
            ref = _embed_source(ref_specs[key], cfg)
            cand = _embed_source(cand_specs[key], cfg)
            if ref.shape[1] != cand.shape[1]:
                raise UsageError(f"{key}: embedding dimensions differ ({ref.shape[1]} vs {cand.shape[1]})")
            fads[key] = frechet_distance(accumulate_stats(ref), accumulate_stats(cand), cfg.metrics.regularize)
        heeps = {}
        if ratings is not None:
            r = load_ratings(ratings)
            if cfg.metrics.heep_mode == "overall":
                heeps["all"] = heep(r, "overall")
            else:
                heeps = dict(zip(r.emotions, heep(r, "per-emotion").tolist()))
        for key in _ordered(set(fads) | set(heeps)):
            report.rows[key] = EmotionScores(fads.get(key), heeps.get(key))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    report.write_csv(out_path)
    plotting.plot_report(report, out_path.with_suffix(".png"))
    for key, s in report.rows.items():
        print(f"{key}: fad={s.fad} heep={s.heep} s_gen={s.s_gen}")
    return EXIT_OK


# -- render / describe -----------------------------------------------------

def _render_inputs(inputs: Sequence[str]) -> list[Path]:
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(list(p.glob("*.png")) + list(p.glob("*.npy"))))
        else:
            paths.append(p)
    return paths


def cmd_render(inputs: Sequence[str], out_dir, style: str = "viridis", manifest_path=None, grid: bool = False) -> int:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    value_range = load_manifest(manifest_path).value_range if manifest_path else None
    failed = 0
    rendered = []
    for p in _render_inputs(inputs):
        try:
            if p.suffix == ".npy":
                values = np.load(p)
                if values.ndim != 2:
                    raise MelPipeError(f"{p}: expected a 2-D log-mel matrix")
                r = value_range or ValueRange(float(values.min()), float(values.max()))
                from .melpipe import LogMelSpectrogram, MelConfig

                pixels = quantize(LogMelSpectrogram(values, MelConfig()), r).pixels
            else:
                pixels = load_png(p).pixels
        except (OSError, MelPipeError, ValueError) as exc:
            failed += 1
            log.error("%s", exc)
            continue
        rgb = apply_viridis(pixels) if style == "viridis" else np.repeat(pixels[:, :, None], 3, axis=2)
        Image.fromarray(np.ascontiguousarray(rgb)).save(out_dir / f"{p.stem}.png", format="PNG")
        rendered.append((p.stem, pixels))
    if grid and rendered:
        plotting.plot_grid([px for _, px in rendered[:12]], out_dir / "grid.png", titles=[n for n, _ in rendered[:12]])
    print(f"render: images={len(rendered)} failed={failed}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_describe(cfg: RunConfig, manifest_path=None) -> int:
    info = {"config": to_dict(cfg)}
    if manifest_path is not None:
        m = load_manifest(manifest_path)
        status_counts = {}
        for r in m.records:
            status_counts[r.status] = status_counts.get(r.status, 0) + 1
        info["manifest"] = {
            "records": len(m.records),
            "status": dict(sorted(status_counts.items())),
            "value_range": None if m.value_range is None else [m.value_range.low, m.value_range.high],
            "selected": {
                preset: {e.value: len(select_emotion(m, e, preset)) for e in EMOTIONS}
                for preset in sorted(SPLIT_PRESETS)
            },
        }
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


# -- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. mel.n_mels=256 (repeatable)")
    common.add_argument("--threads", type=int, help="worker threads (capped by BURSTPIPE_THREADS)")
    common.add_argument("--seed", type=int)
    common.add_argument("--n-mels", type=int, help="mel bands; also the square image size")
    common.add_argument("--wav-format", choices=("pcm16", "float32"))
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="burstpipe", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("preprocess", parents=[common], help="denoise, trim and filter a corpus")
    s.add_argument("manifest")
    s.add_argument("-o", "--out", required=True)

    s = sub.add_parser("melspec", parents=[common], help="encode kept clips as square grayscale PNGs")
    s.add_argument("manifest")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--include-raw", action="store_true", help="also encode records never preprocessed")
    s.add_argument("--no-figures", action="store_true")

    s = sub.add_parser("invert", parents=[common], help="invert spectrogram PNGs to WAV")
    s.add_argument("image_dir")
    s.add_argument("--manifest", required=True, help="manifest carrying the value range and mel config")
    s.add_argument("-o", "--out", required=True)

    s = sub.add_parser("generate", parents=[common], help="sample images from the PCA-Gaussian baseline")
    s.add_argument("--emotion", required=True)
    s.add_argument("-n", type=int, default=1000)
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="fitted model file")
    src.add_argument("--manifest", help="melspec manifest to fit on")
    s.add_argument("--images", help="image directory (default: <manifest dir>/images)")
    s.add_argument("--k", type=int, help="principal components")
    s.add_argument("--save-model")
    s.add_argument("-o", "--out", required=True)

    s = sub.add_parser("evaluate", parents=[common], help="FAD / HEEP / S_GEN report")
    s.add_argument("--ref", action="append", default=[], metavar="[EMOTION=]PATH",
                   help="reference embeddings file or WAV directory (repeatable)")
    s.add_argument("--cand", action="append", default=[], metavar="[EMOTION=]PATH")
    s.add_argument("--ratings", help="CSV: id,target,<emotion columns>")
    s.add_argument("--recompute", help="existing report CSV whose S_GEN column is recomputed")
    s.add_argument("--embeddings-have-id", action="store_true")
    s.add_argument("-o", "--out", required=True, help="report CSV (a .png figure is written alongside)")

    s = sub.add_parser("render", parents=[common], help="colormapped display copies of spectrograms")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--style", choices=("viridis", "gray"), default="viridis")
    s.add_argument("--manifest", help="value range for .npy log-mel inputs")
    s.add_argument("--grid", action="store_true", help="also write a matplotlib grid figure")
    s.add_argument("-o", "--out", required=True)

    s = sub.add_parser("describe", parents=[common], help="print the effective configuration")
    s.add_argument("--manifest")
    return p


def _config_from_args(args) -> RunConfig:
    overrides = list(args.overrides)
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.n_mels is not None:
        overrides.append(f"mel.n_mels={args.n_mels}")
    if args.wav_format is not None:
        overrides.append(f"wav_format={json.dumps(args.wav_format)}")
    if getattr(args, "k", None) is not None:
        overrides.append(f"generator.k={args.k}")
    if getattr(args, "embeddings_have_id", False):
        overrides.append("metrics.embeddings_have_id=true")
    return load_config(args.config, overrides)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = _config_from_args(args)
        if args.command == "preprocess":
            return cmd_preprocess(args.manifest, cfg, args.out)
        if args.command == "melspec":
            return cmd_melspec(args.manifest, cfg, args.out, args.include_raw, not args.no_figures)
        if args.command == "invert":
            return cmd_invert(args.image_dir, args.manifest, cfg, args.out)
        if args.command == "generate":
            return cmd_generate(cfg, args.out, args.emotion, args.n, args.model, args.manifest, args.images,
                                args.save_model)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.out, args.ref, args.cand, args.ratings, args.recompute)
        if args.command == "render":
            return cmd_render(args.inputs, args.out, args.style, args.manifest, args.grid)
        return cmd_describe(cfg, args.manifest)
    except (ConfigError, UsageError, ManifestError, MetricError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
