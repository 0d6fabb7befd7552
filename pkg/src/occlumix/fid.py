"""Frechet-distance evaluation over feature vectors, globally and per body
region.

Feature statistics stream through a numerically stable accumulator that can
also merge partial results from parallel shards exactly.  The distance uses
the symmetric-similarity form of the matrix square root (an eigendecomposition
of Sa^(1/2) Sb Sa^(1/2)), with small or negative eigenvalues clamped to zero,
and the result floored at zero.
"""

from __future__ import annotations

import hashlib
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .batch import run_batch
from .core import BinaryMask, ImageBuffer, resize_bilinear
from .data import DatasetManifest, ManifestEntry
from .errors import DegenerateInputError, InputValidationError, NumericalError
from .formats import load_feature_stack, load_image, load_region_map

EIGENVALUE_CLAMP_RATIO = 1e-8
COV_SYMMETRY_TOL = 1e-9
PSD_EIGENVALUE_TOL = 1e-8
DEFAULT_CROP_SIZE = 299
CROP_BACKGROUND = 0.5
OVERALL_ROW = "overall"


@dataclass(frozen=True)
class FeatureStats:
    """Sample count, mean and unbiased covariance of a feature population."""

    count: int
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        if self.count < 2:
            raise InputValidationError(f"need at least 2 samples, got {self.count}")
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1:
            raise InputValidationError(f"mean must be 1-D, got shape {mean.shape}")
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise InputValidationError(f"cov must have shape ({d}, {d}), got {cov.shape}")
        if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
            raise NumericalError("statistics contain non-finite values")
        scale = max(1.0, float(np.abs(cov).max()))
        if float(np.abs(cov - cov.T).max()) > COV_SYMMETRY_TOL * scale:
            raise InputValidationError("covariance is not symmetric")
        eigs = np.linalg.eigvalsh((cov + cov.T) / 2.0)
        if float(eigs.min()) < -PSD_EIGENVALUE_TOL * max(1.0, float(eigs.max())):
            raise InputValidationError("covariance is not positive semidefinite")
        mean = np.ascontiguousarray(mean).copy()
        cov = np.ascontiguousarray(cov).copy()
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


class StatsAccumulator:
    """Streaming mean/covariance accumulator.

    `update` consumes one vector at a time without materialising the
    population; `merge` combines two partial accumulators exactly (pooled
    mean and scatter), so shards processed in parallel give the same result
    as a single pass up to floating-point roundoff.
    """

    def __init__(self) -> None:
        self.count = 0
        self._mean: np.ndarray | None = None
        self._m2: np.ndarray | None = None

    @property
    def dim(self) -> int | None:
        return None if self._mean is None else self._mean.shape[0]

    def update(self, vector: np.ndarray) -> None:
        vec = np.asarray(vector, dtype=np.float64).ravel()
        if vec.size == 0:
            raise InputValidationError("feature vector is empty")
        if not np.isfinite(vec).all():
            raise NumericalError("feature vector contains non-finite values")
        if self._mean is None:
            self._mean = np.zeros(vec.shape[0], dtype=np.float64)
            self._m2 = np.zeros((vec.shape[0], vec.shape[0]), dtype=np.float64)
        elif vec.shape[0] != self._mean.shape[0]:
            raise InputValidationError(
                f"feature dim {vec.shape[0]} differs from accumulated dim {self._mean.shape[0]}")
        self.count += 1
        delta = vec - self._mean
        self._mean += delta / self.count
        self._m2 += np.outer(delta, vec - self._mean)

    def merge(self, other: "StatsAccumulator") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count = other.count
            self._mean = other._mean.copy()
            self._m2 = other._m2.copy()
            return
        if other.dim != self.dim:
            raise InputValidationError(
                f"cannot merge accumulators of dims {self.dim} and {other.dim}")
        total = self.count + other.count
        delta = other._mean - self._mean
        self._m2 = (self._m2 + other._m2
                    + np.outer(delta, delta) * (self.count * other.count / total))
        self._mean = self._mean + delta * (other.count / total)
        self.count = total

    def finalize(self) -> FeatureStats:
        if self.count < 2:
            raise DegenerateInputError(
                f"need at least 2 samples to form statistics, got {self.count}")
        cov = (self._m2 + self._m2.T) / (2.0 * (self.count - 1))
        return FeatureStats(count=self.count, mean=self._mean.copy(), cov=cov)


def accumulate_stats(vectors: Iterable[np.ndarray] | np.ndarray) -> FeatureStats:
    """Statistics of a feature population given row vectors."""
    acc = StatsAccumulator()
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        rows: Iterable[np.ndarray] = vectors
    else:
        rows = vectors
    for row in rows:
        acc.update(np.asarray(row))
    return acc.finalize()


def _clamped_eigh(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        w, v = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as err:
        raise NumericalError(f"eigendecomposition failed: {err}") from err
    floor = EIGENVALUE_CLAMP_RATIO * max(float(w.max()), 0.0)
    w = np.where(w < floor, 0.0, w)
    return w, v


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """Frechet distance between two Gaussians summarised by their stats.

    ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa^(1/2) Sb Sa^(1/2))^(1/2)),
    evaluated through symmetric eigendecompositions only.  Eigenvalues below
    1e-8 of the largest are clamped to zero and the result is floored at 0,
    so equal inputs give (numerically) zero.
    """
    if a.dim != b.dim:
        raise InputValidationError(f"feature dims differ: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    mean_term = float(diff @ diff)

    wa, va = _clamped_eigh((a.cov + a.cov.T) / 2.0)
    a_half = (va * np.sqrt(wa)[None, :]) @ va.T
    inner = a_half @ b.cov @ a_half
    w, _ = _clamped_eigh((inner + inner.T) / 2.0)
    trace_term = float(np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.sqrt(w).sum())
    return max(mean_term + trace_term, 0.0)


def region_crop(image: ImageBuffer, mask: BinaryMask, size: int = DEFAULT_CROP_SIZE) -> ImageBuffer:
    """Standardised region crop used before feature extraction and hashing.

    The image is masked onto a mid-grey background, cropped to the tight
    bounding box of the mask, and bilinearly resized to size x size.
    """
    if (mask.height, mask.width) != (image.height, image.width):
        raise InputValidationError("mask dims differ from image dims")
    if size < 1:
        raise InputValidationError("crop size must be >= 1")
    if mask.area == 0:
        raise DegenerateInputError("region mask is empty")
    sel = mask.data.astype(bool)[:, :, None]
    grey = np.where(sel, image.data, CROP_BACKGROUND)
    ys, xs = np.nonzero(mask.data)
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    return resize_bilinear(ImageBuffer(grey[y0:y1, x0:x1, :]), size, size)


def content_hash(image: ImageBuffer) -> str:
    """Hex digest identifying an image by its 8-bit quantised content."""
    q = np.round(image.data * 255.0).astype(np.uint8)
    h = hashlib.sha256()
    h.update(b"OMXRASTER")
    for dim in (image.height, image.width, image.channels):
        h.update(int(dim).to_bytes(4, "little"))
    h.update(np.ascontiguousarray(q).tobytes())
    return h.hexdigest()


def _flatten_stack_file(path: Path) -> np.ndarray:
    stack = load_feature_stack(path)
    return np.concatenate([level.ravel() for level in stack.levels]).astype(np.float64)


def _lookup_features(features_dir: Path, digest: str, entry_id: str, row: str) -> Path | None:
    by_hash = features_dir / f"{digest}.ften"
    if by_hash.is_file():
        return by_hash
    by_name = features_dir / f"{entry_id}__{row}.ften"
    if by_name.is_file():
        return by_name
    return None


@dataclass
class RegionReport:
    """Per-row Frechet distances: one row per named region set plus an
    overall row.  Rows that could not be computed carry None and a note."""

    values: dict[str, float | None]
    counts: dict[str, dict[str, int]]
    notes: dict[str, list[str]] = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "rows": {name: self.values[name] for name in self.values},
            "counts": self.counts,
            "notes": self.notes,
        }


def _entry_row_vectors(
    manifest: DatasetManifest,
    entry: ManifestEntry,
    rows: dict[str, list[int] | None],
    features_dir: Path,
    crop_size: int,
) -> tuple[dict[str, np.ndarray], list[tuple[str, str]]]:
    vectors: dict[str, np.ndarray] = {}
    problems: list[tuple[str, str]] = []
    try:
        image = load_image(manifest.resolve_required(entry, "person_image"))
    except InputValidationError as err:
        return {}, [(row, f"{entry.id}: {err}") for row in rows]
    region_map = None
    for row, ids in rows.items():
        try:
            if ids is None:
                mask = BinaryMask(np.ones((image.height, image.width), dtype=np.uint8))
            else:
                if region_map is None:
                    region_map = load_region_map(manifest.resolve_required(entry, "region_map"))
                if (region_map.height, region_map.width) != (image.height, image.width):
                    raise InputValidationError("region map dims differ from image dims")
                available = set(region_map.ids_present())
                present = [i for i in ids if i in available]
                if not present:
                    raise DegenerateInputError("region absent from this image")
                mask = region_map.region_mask(present)
            crop = region_crop(image, mask, crop_size)
            digest = content_hash(crop)
            path = _lookup_features(features_dir, digest, entry.id, row)
            if path is None:
                raise InputValidationError(
                    f"no feature file {digest}.ften or {entry.id}__{row}.ften")
            vectors[row] = _flatten_stack_file(path)
        except (InputValidationError, DegenerateInputError) as err:
            problems.append((row, f"{entry.id}: {err}"))
    return vectors, problems


def region_fid(
    real_manifest: DatasetManifest,
    generated_manifest: DatasetManifest,
    features_dir: str | Path,
    regions: dict[str, list[int]],
    crop_size: int = DEFAULT_CROP_SIZE,
    threads: int | None = None,
) -> RegionReport:
    """Per-region Frechet distances between a real and a generated corpus.

    `regions` maps a row name to the region ids it aggregates; an overall
    row over the full frame is always appended.  For each image and row the
    standardised crop is computed and its feature file looked up in
    `features_dir`, first by content hash, then as `<id>__<row>.ften`.
    Images missing a region or a feature file are dropped from that row
    only; rows left with fewer than 2 samples on either side report None.
    """
    features_path = Path(features_dir)
    if not features_path.is_dir():
        raise InputValidationError(f"features directory not found: {features_path}")
    rows: dict[str, list[int] | None] = {}
    for name, ids in regions.items():
        if name == OVERALL_ROW:
            raise InputValidationError(f"row name {OVERALL_ROW!r} is reserved")
        ids = [int(i) for i in ids]
        if not ids:
            raise InputValidationError(f"region set {name!r} is empty")
        rows[str(name)] = ids
    rows[OVERALL_ROW] = None

    sides = (("real", real_manifest), ("generated", generated_manifest))
    items = [(side_name, manifest, entry)
             for side_name, manifest in sides
             for entry in manifest.entries]

    def worker(item):
        side_name, manifest, entry = item
        return _entry_row_vectors(manifest, entry, rows, features_path, crop_size)

    results = run_batch(items, worker, threads)

    accs = {row: {"real": StatsAccumulator(), "generated": StatsAccumulator()} for row in rows}
    notes: dict[str, list[str]] = {row: [] for row in rows}
    for (side_name, _, _), (vectors, problems) in zip(items, results):
        for row, vec in vectors.items():
            try:
                accs[row][side_name].update(vec)
            except (InputValidationError, NumericalError) as err:
                notes[row].append(f"{side_name}: {err}")
        for row, message in problems:
            notes[row].append(f"{side_name}: {message}")

    values: dict[str, float | None] = {}
    counts: dict[str, dict[str, int]] = {}
    for row in rows:
        real_acc = accs[row]["real"]
        gen_acc = accs[row]["generated"]
        counts[row] = {"real": real_acc.count, "generated": gen_acc.count}
        if real_acc.count < 2 or gen_acc.count < 2:
            values[row] = None
            notes[row].append("fewer than 2 usable samples on at least one side")
            continue
        try:
            values[row] = frechet_distance(real_acc.finalize(), gen_acc.finalize())
        except (InputValidationError, NumericalError, DegenerateInputError) as err:
            values[row] = None
            notes[row].append(str(err))
    return RegionReport(values=values, counts=counts,
                        notes={row: msgs for row, msgs in notes.items() if msgs})
