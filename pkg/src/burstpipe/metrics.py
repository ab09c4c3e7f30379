"""Fréchet distance over embeddings, HEEP correlation and the S_GEN aggregate."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class MetricError(ValueError):
    pass


class UndefinedScore(MetricError):
    """A correlation whose variance term is zero."""


@dataclass(frozen=True)
class GaussianStats:
    """Mean, unbiased covariance and sample count of a feature collection."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def merge(self, other: "GaussianStats") -> "GaussianStats":
        """Pooled statistics of the union of both sample sets (Chan et al. update)."""
        if other.dim != self.dim:
            raise MetricError(f"dimension mismatch: {self.dim} vs {other.dim}")
        n_a, n_b = self.count, other.count
        n = n_a + n_b
        delta = other.mean - self.mean
        mean = self.mean + delta * (n_b / n)
        scatter = (
            self.cov * (n_a - 1)
            + other.cov * (n_b - 1)
            + np.outer(delta, delta) * (n_a * n_b / n)
        )
        return GaussianStats(mean, scatter / (n - 1), n)


class StatsAccumulator:
    """Streaming (Welford) accumulation of mean and scatter matrix."""

    def __init__(self, dim: int | None = None):
        self.dim = dim
        self.count = 0
        self._mean = None
        self._scatter = None

    def add(self, vector) -> None:
        v = np.asarray(vector, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise MetricError("feature vectors must be finite")
        if self.dim is None:
            self.dim = v.shape[0]
        if v.shape[0] != self.dim:
            raise MetricError(f"dimension mismatch: expected {self.dim}, got {v.shape[0]}")
        if self._mean is None:
            self._mean = np.zeros(self.dim)
            self._scatter = np.zeros((self.dim, self.dim))
        self.count += 1
        delta = v - self._mean
        self._mean += delta / self.count
        self._scatter += np.outer(delta, v - self._mean)

    def stats(self) -> GaussianStats:
        if self.count < 2:
            raise MetricError(f"need at least 2 feature vectors, got {self.count}")
        cov = self._scatter / (self.count - 1)
        cov = 0.5 * (cov + cov.T)
        return GaussianStats(self._mean.copy(), cov, self.count)


def accumulate_stats(features: Iterable) -> GaussianStats:
    acc = StatsAccumulator()
    for v in features:
        acc.add(v)
    return acc.stats()


def _check_symmetric(M: np.ndarray, tol: float) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise MetricError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise MetricError("matrix has non-finite entries")
    scale = max(float(np.max(np.abs(M))), 1.0)
    if np.max(np.abs(M - M.T)) > tol * scale:
        raise MetricError("matrix is not symmetric")
    return 0.5 * (M + M.T)


def sqrtm_psd(M, tol: float = 1e-8) -> np.ndarray:
    """Symmetric square root of a PSD matrix; negative eigenvalues are clipped to 0."""
    M = _check_symmetric(M, tol)
    w, V = np.linalg.eigh(M)
    root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    return 0.5 * (root + root.T)


def _trace_sqrt_product(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    # tr sqrt(A^1/2 B A^1/2): the congruence keeps the product symmetric PSD
    root_a = sqrtm_psd(cov_a)
    middle = root_a @ cov_b @ root_a
    middle = 0.5 * (middle + middle.T)
    w = np.linalg.eigvalsh(middle)
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))))


def frechet_distance(a: GaussianStats, b: GaussianStats, regularize: bool = False) -> float:
    """Squared Fréchet (2-Wasserstein) distance between two Gaussians."""
    if a.dim != b.dim:
        raise MetricError(f"dimension mismatch: {a.dim} vs {b.dim}")
    cov_a, cov_b = a.cov, b.cov
    if regularize:
        d = a.dim
        cov_a = cov_a + np.eye(d) * (1e-10 * np.trace(cov_a) / d)
        cov_b = cov_b + np.eye(d) * (1e-10 * np.trace(cov_b) / d)
    diff = a.mean - b.mean
    tr_cross = _trace_sqrt_product(cov_a, cov_b)
    if not math.isfinite(tr_cross) and not regularize:
        return frechet_distance(a, b, regularize=True)
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_cross)
    if value < 0:
        if value < -1e-8:
            log.warning("Fréchet distance came out at %.3g; clamping to 0", value)
        value = 0.0
    return value


def logmel_embedding(lm) -> np.ndarray:
    """Per-band mean followed by per-band (population) std over frames, length ``2 * n_mels``."""
    values = np.asarray(getattr(lm, "values", lm), dtype=np.float64)
    return np.concatenate([values.mean(axis=1), values.std(axis=1)])


def load_embeddings(
    path: str | os.PathLike, has_id: bool = False, min_rows: int = 1
) -> tuple[np.ndarray, list[str] | None]:
    """Read one comma-separated vector per line; returns ``(matrix, ids or None)``."""
    rows, ids = [], [] if has_id else None
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if has_id:
                ids.append(parts[0])
                parts = parts[1:]
            try:
                row = [float(p) for p in parts]
            except ValueError as exc:
                raise MetricError(f"{os.fspath(path)}:{lineno}: malformed row ({exc})") from exc
            if not row or not all(math.isfinite(v) for v in row):
                raise MetricError(f"{os.fspath(path)}:{lineno}: empty or non-finite row")
            if dim is None:
                dim = len(row)
            elif len(row) != dim:
                raise MetricError(
                    f"{os.fspath(path)}:{lineno}: dimension {len(row)} differs from first row ({dim})"
                )
            rows.append(row)
    if len(rows) < min_rows:
        raise MetricError(f"{os.fspath(path)}: need at least {min_rows} vectors, found {len(rows)}")
    return np.array(rows, dtype=np.float64), ids


def save_embeddings(path: str | os.PathLike, vectors, ids: Sequence[str] | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, v in enumerate(np.atleast_2d(vectors)):
            body = ",".join(format(float(x), ".17g") for x in v)
            fh.write(f"{ids[i]},{body}\n" if ids is not None else body + "\n")


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise MetricError("operands must have the same size")
    # a constant operand is judged exactly; its centred values may carry rounding residue
    if x.size == 0 or np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedScore("zero variance: correlation undefined")
    dx = x - x.mean()
    dy = y - y.mean()
    var_x = float(dx @ dx)
    var_y = float(dy @ dy)
    r = float(dx @ dy) / math.sqrt(var_x * var_y)
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class RatingMatrices:
    """One-hot targets ``T`` and human ratings ``H``, both samples x emotions."""

    T: np.ndarray
    H: np.ndarray
    emotions: tuple[str, ...] = ()

    def __post_init__(self):
        T = np.asarray(self.T, dtype=np.float64)
        H = np.asarray(self.H, dtype=np.float64)
        if T.shape != H.shape or T.ndim != 2:
            raise MetricError(f"T and H must be same-shape matrices, got {T.shape} and {H.shape}")
        if not np.all((T == 0) | (T == 1)) or not np.all(T.sum(axis=1) == 1):
            raise MetricError("every row of T must be one-hot")
        if not np.all(np.isfinite(H)):
            raise MetricError("ratings must be finite")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "H", H)


def heep(r: RatingMatrices, mode: str = "per-emotion"):
    """Correlation between targets and ratings.

    ``per-emotion`` returns one value per column, with NaN where a column
    has zero variance in T or H (undefined); ``overall`` correlates the
    flattened matrices and raises :class:`UndefinedScore` if undefined.
    """
    if mode == "overall":
        return pearson(r.T, r.H)
    if mode != "per-emotion":
        raise MetricError(f"unknown HEEP mode {mode!r}")
    out = np.full(r.T.shape[1], np.nan)
    for j in range(r.T.shape[1]):
        try:
            out[j] = pearson(r.T[:, j], r.H[:, j])
        except UndefinedScore:
            pass
    return out


def s_gen(fad: float, heep_value: float) -> float:
    if not fad > 0:
        raise MetricError(f"FAD must be positive, got {fad}")
    return (1.0 / fad + heep_value) / 2.0


@dataclass
class EmotionScores:
    fad: float | None = None
    heep: float | None = None

    @property
    def s_gen(self) -> float | None:
        if self.fad is None or self.heep is None or not self.fad > 0 or math.isnan(self.heep):
            return None
        return s_gen(self.fad, self.heep)


@dataclass
class EvalReport:
    """Per-emotion FAD/HEEP/S_GEN rows, in insertion (canonical) order."""

    rows: dict[str, EmotionScores] = field(default_factory=dict)

    def overall(self) -> EmotionScores:
        fads = [s.fad for s in self.rows.values() if s.fad is not None]
        heeps = [s.heep for s in self.rows.values() if s.heep is not None and not math.isnan(s.heep)]
        return EmotionScores(
            float(np.mean(fads)) if fads else None, float(np.mean(heeps)) if heeps else None
        )

    def write_csv(self, path: str | os.PathLike) -> None:
        def cell(v):
            if v is None:
                return ""
            if isinstance(v, float) and math.isnan(v):
                return "undefined"
            return format(v, ".6g")

        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["emotion", "fad", "heep", "s_gen"])
            for name, s in self.rows.items():
                w.writerow([name, cell(s.fad), cell(s.heep), cell(s.s_gen)])
            if len(self.rows) > 1:
                o = self.overall()
                w.writerow(["overall", cell(o.fad), cell(o.heep), cell(o.s_gen)])

    @classmethod
    def read_csv(cls, path: str | os.PathLike) -> "EvalReport":
        """Read ``emotion,fad,heep[,s_gen]``; any s_gen column is ignored and recomputed."""
        report = cls()
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"emotion", "fad", "heep"} - set(reader.fieldnames or ())
            if missing:
                raise MetricError(f"{os.fspath(path)}: missing columns {sorted(missing)}")
            for row in reader:
                if row["emotion"] == "overall":
                    continue

                def num(v):
                    v = (v or "").strip()
                    if not v:
                        return None
                    return math.nan if v == "undefined" else float(v)

                report.rows[row["emotion"]] = EmotionScores(num(row["fad"]), num(row["heep"]))
        return report
