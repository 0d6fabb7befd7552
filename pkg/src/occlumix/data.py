"""Dataset manifests, run configuration, and corpus statistics.

A manifest is a JSON object with an "entries" array; each entry has a
unique, path-safe "id" and per-asset relative paths (person_image,
cloth_image, cloth_mask, label_map, pose, region_map).  Paths resolve
relative to the manifest file's directory.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

import numpy as np

from .batch import run_batch
from .core import Palette
from .errors import InputValidationError
from .formats import load_label_map, load_mask, read_json
from .texture import TexturePools

_ID_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")

ENTRY_PATH_FIELDS = (
    "person_image",
    "cloth_image",
    "cloth_mask",
    "label_map",
    "pose",
    "region_map",
)


@dataclass(frozen=True)
class ManifestEntry:
    """One corpus item: an id plus relative paths to its assets."""

    id: str
    person_image: str | None = None
    cloth_image: str | None = None
    cloth_mask: str | None = None
    label_map: str | None = None
    pose: str | None = None
    region_map: str | None = None

    def __post_init__(self) -> None:
        if not _ID_PATTERN.match(self.id):
            raise InputValidationError(
                f"entry id {self.id!r} must match {_ID_PATTERN.pattern}")
        for name in ENTRY_PATH_FIELDS:
            value = getattr(self, name)
            if value is not None and (not isinstance(value, str) or value == ""):
                raise InputValidationError(f"entry {self.id!r}: {name} must be a non-empty string")


@dataclass(frozen=True)
class DatasetManifest:
    """All entries of a corpus plus the directory their paths resolve from."""

    entries: tuple[ManifestEntry, ...]
    base_dir: Path

    def __post_init__(self) -> None:
        entries = tuple(self.entries)  # an empty corpus is valid
        seen: set[str] = set()
        for entry in entries:
            if entry.id in seen:
                raise InputValidationError(f"duplicate entry id {entry.id!r}")
            seen.add(entry.id)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "base_dir", Path(self.base_dir))

    def __len__(self) -> int:
        return len(self.entries)

    def by_id(self, entry_id: str) -> ManifestEntry:
        for entry in self.entries:
            if entry.id == entry_id:
                return entry
        raise InputValidationError(f"no entry with id {entry_id!r}")

    def resolve(self, entry: ManifestEntry, field: str) -> Path | None:
        """Absolute path of an entry asset, or None when the field is unset."""
        if field not in ENTRY_PATH_FIELDS:
            raise InputValidationError(f"unknown manifest field {field!r}")
        value = getattr(entry, field)
        if value is None:
            return None
        return self.base_dir / value

    def resolve_required(self, entry: ManifestEntry, field: str) -> Path:
        path = self.resolve(entry, field)
        if path is None:
            raise InputValidationError(f"entry {entry.id!r} has no {field}")
        if not path.is_file():
            raise InputValidationError(f"entry {entry.id!r}: {field} not found at {path}")
        return path

    def require_fields(self, fields: tuple[str, ...]) -> None:
        """Check every entry declares the given fields and the files exist."""
        for entry in self.entries:
            for field in fields:
                self.resolve_required(entry, field)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a manifest file and validate ids and entry shapes."""
    path = Path(path)
    obj = read_json(path)
    if not isinstance(obj, dict) or not isinstance(obj.get("entries"), list):
        raise InputValidationError(f"{path}: manifest must be an object with an 'entries' array")
    known = {f.name for f in dataclass_fields(ManifestEntry)}
    entries = []
    for i, raw in enumerate(obj["entries"]):
        if not isinstance(raw, dict):
            raise InputValidationError(f"{path}: entry {i} must be an object")
        if "id" not in raw or not isinstance(raw["id"], str):
            raise InputValidationError(f"{path}: entry {i} needs a string 'id'")
        unknown = set(raw) - known
        if unknown:
            raise InputValidationError(
                f"{path}: entry {raw['id']!r} has unknown fields {sorted(unknown)}")
        try:
            entries.append(ManifestEntry(**raw))
        except InputValidationError as err:
            raise InputValidationError(f"{path}: {err}") from err
        except TypeError as err:
            raise InputValidationError(f"{path}: entry {i}: {err}") from err
    try:
        return DatasetManifest(entries=tuple(entries), base_dir=path.resolve().parent)
    except InputValidationError as err:
        raise InputValidationError(f"{path}: {err}") from err


def save_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    rows = []
    for entry in manifest.entries:
        row = {"id": entry.id}
        for field in ENTRY_PATH_FIELDS:
            value = getattr(entry, field)
            if value is not None:
                row[field] = value
        rows.append(row)
    Path(path).write_text(json.dumps({"entries": rows}, indent=2) + "\n")


def load_texture_pools(path: str | Path) -> TexturePools:
    """Read a pools file: {"complex": [ids...], "simple": [ids...]}."""
    obj = read_json(path)
    if not isinstance(obj, dict):
        raise InputValidationError(f"{path}: pools file must be a JSON object")
    for key in ("complex", "simple"):
        if not isinstance(obj.get(key), list):
            raise InputValidationError(f"{path}: pools file needs a {key!r} array")
        for v in obj[key]:
            if not isinstance(v, str):
                raise InputValidationError(f"{path}: pool ids must be strings")
    try:
        return TexturePools(complex_ids=tuple(obj["complex"]), simple_ids=tuple(obj["simple"]))
    except InputValidationError as err:
        raise InputValidationError(f"{path}: {err}") from err


def save_texture_pools(path: str | Path, pools: TexturePools) -> None:
    obj = {"complex": list(pools.complex_ids), "simple": list(pools.simple_ids)}
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_region_sets(path: str | Path) -> dict[str, list[int]]:
    """Read a region-sets file: {"row name": [region ids...], ...}."""
    obj = read_json(path)
    if not isinstance(obj, dict) or not obj:
        raise InputValidationError(f"{path}: region sets must be a non-empty JSON object")
    out: dict[str, list[int]] = {}
    for name, ids in obj.items():
        if not isinstance(ids, list) or not ids:
            raise InputValidationError(f"{path}: region set {name!r} must be a non-empty array")
        for v in ids:
            if not isinstance(v, int) or isinstance(v, bool):
                raise InputValidationError(f"{path}: region set {name!r} must hold integers")
        out[str(name)] = [int(v) for v in ids]
    return out


@dataclass(frozen=True)
class RunConfig:
    """Defaults for a processing run; every field can be overridden by the
    matching command-line flag."""

    seed: int = 0
    mix_weight: float = 0.5
    entropy_threshold: float = 2.5
    glcm_levels: int = 32
    min_pixels: int = 16
    attempts: int = 8
    align: bool = True
    alpha_l: float = 1.0
    alpha_p: float = 1.0
    epsilon: float = 1e-3
    alpha: float = 0.45
    crop_size: int = 299
    occlusion_dist: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise InputValidationError(f"seed must be a non-negative integer, got {self.seed!r}")
        if not (0.0 <= self.mix_weight <= 1.0):
            raise InputValidationError(f"mix_weight must lie in [0, 1], got {self.mix_weight}")
        if not np.isfinite(self.entropy_threshold):
            raise InputValidationError("entropy_threshold must be finite")
        if self.glcm_levels < 2:
            raise InputValidationError("glcm_levels must be >= 2")
        if self.min_pixels < 1:
            raise InputValidationError("min_pixels must be >= 1")
        if self.attempts < 1:
            raise InputValidationError("attempts must be >= 1")
        for name, value in (("alpha_l", self.alpha_l), ("alpha_p", self.alpha_p)):
            if not np.isfinite(value) or value < 0.0:
                raise InputValidationError(f"{name} must be finite and >= 0")
        if not np.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise InputValidationError("epsilon must be finite and >= 0")
        if not np.isfinite(self.alpha) or not (0.0 < self.alpha <= 1.0):
            raise InputValidationError("alpha must lie in (0, 1]")
        if self.crop_size < 1:
            raise InputValidationError("crop_size must be >= 1")


def load_run_config(path: str | Path) -> RunConfig:
    """Read a run-config JSON file; unknown keys are rejected."""
    obj = read_json(path)
    if not isinstance(obj, dict):
        raise InputValidationError(f"{path}: config must be a JSON object")
    known = {f.name for f in dataclass_fields(RunConfig)}
    unknown = set(obj) - known
    if unknown:
        raise InputValidationError(f"{path}: unknown config keys {sorted(unknown)}")
    try:
        return RunConfig(**obj)
    except InputValidationError as err:
        raise InputValidationError(f"{path}: {err}") from err
    except TypeError as err:
        raise InputValidationError(f"{path}: {err}") from err


def corpus_stats(
    manifest: DatasetManifest,
    palette: Palette | None = None,
    threads: int | None = None,
) -> dict:
    """Per-class pixel frequencies across the corpus and per-entry areas.

    Entries without a readable label map are reported under "skipped".
    Class keys use palette names when available, otherwise "class_<id>".
    """

    def class_key(cid: int) -> str:
        if palette is not None:
            name = palette.name_of(cid)
            if name is not None:
                return name
        return f"class_{cid}"

    def worker(entry):
        try:
            labels = load_label_map(manifest.resolve_required(entry, "label_map"))
        except InputValidationError as err:
            return {"id": entry.id, "error": str(err)}
        if palette is not None:
            declared = palette.ids()
            stray = [int(v) for v in np.unique(labels.data) if int(v) not in declared]
            if stray:
                return {"id": entry.id, "error": f"ids not in palette: {stray}"}
        counts = np.bincount(labels.data.ravel())
        areas = {class_key(cid): int(n) for cid, n in enumerate(counts) if n > 0}
        row = {"id": entry.id, "pixels": int(labels.data.size), "areas": areas}
        mask_path = manifest.resolve(entry, "cloth_mask")
        if mask_path is not None and mask_path.is_file():
            row["cloth_mask_area"] = load_mask(mask_path).area
        return row

    rows = run_batch(list(manifest.entries), worker, threads)

    totals: dict[str, int] = {}
    total_pixels = 0
    ok_rows = []
    skipped = []
    for row in rows:
        if "error" in row:
            skipped.append(row)
            continue
        ok_rows.append(row)
        total_pixels += row["pixels"]
        for key, n in row["areas"].items():
            totals[key] = totals.get(key, 0) + n
    frequencies = ({key: totals[key] / total_pixels for key in sorted(totals)}
                   if total_pixels else {})
    return {
        "class_frequencies": frequencies,
        "total_label_pixels": total_pixels,
        "entries": ok_rows,
        "skipped": skipped,
    }
