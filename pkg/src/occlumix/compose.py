"""Occlusion-aware copy-paste compositing.

A body-part region of person A is selected according to an occlusion
distribution, intersected with the worn-cloth mask of a partner B drawn from
the texture pools, and the partner's pixels are pasted into the intersection.
Every pixel of the result comes verbatim from exactly one of the two source
images, so the composite mask fully describes provenance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .batch import run_batch
from .core import (
    BinaryMask,
    ImageBuffer,
    PartRegionMap,
    extract_class_mask,
    resize_bilinear,
    resize_nearest,
)
from .data import DatasetManifest, ManifestEntry
from .errors import DegenerateInputError, InputValidationError
from .formats import (
    load_image,
    load_label_map,
    load_mask,
    load_region_map,
    read_json,
    save_image,
    save_mask,
)
from .texture import TexturePools, sample_partner

DEFAULT_MIN_COMPOSITE_PIXELS = 16
DEFAULT_REGION_ATTEMPTS = 8


@dataclass(frozen=True)
class OcclusionDistribution:
    """Relative occlusion weight per body-part region id.

    Weights are non-negative, finite, and at least one must be positive;
    they are renormalised whenever the distribution is restricted or
    sampled, so any positive scale works.
    """

    weights: dict[int, float]

    def __post_init__(self) -> None:
        if not self.weights:
            raise InputValidationError("occlusion distribution is empty")
        cleaned: dict[int, float] = {}
        for rid, w in self.weights.items():
            rid = int(rid)
            w = float(w)
            if rid < 1:
                raise InputValidationError(f"region id must be >= 1, got {rid}")
            if not np.isfinite(w) or w < 0.0:
                raise InputValidationError(f"weight for region {rid} must be finite and >= 0")
            cleaned[rid] = w
        if sum(cleaned.values()) <= 0.0:
            raise InputValidationError("at least one region weight must be positive")
        object.__setattr__(self, "weights", cleaned)

    def restricted(self, region_ids) -> "OcclusionDistribution":
        """Distribution over the given ids only; degenerate when no positive
        weight survives."""
        wanted = {int(i) for i in region_ids}
        keep = {rid: w for rid, w in self.weights.items() if rid in wanted and w > 0.0}
        if not keep or sum(keep.values()) <= 0.0:
            raise DegenerateInputError("no region with positive occlusion weight is present")
        return OcclusionDistribution(keep)

    def items_normalized(self) -> list[tuple[int, float]]:
        """(region id, probability) pairs in ascending id order."""
        total = sum(self.weights.values())
        return [(rid, self.weights[rid] / total) for rid in sorted(self.weights)]


def load_occlusion_distribution(path) -> OcclusionDistribution:
    """Read a distribution file: a JSON object mapping region id (as a
    string) to a non-negative weight."""
    obj = read_json(path)
    if not isinstance(obj, dict) or not obj:
        raise InputValidationError(f"{path}: distribution must be a non-empty JSON object")
    weights: dict[int, float] = {}
    for key, value in obj.items():
        try:
            rid = int(key)
        except (TypeError, ValueError):
            raise InputValidationError(f"{path}: region key {key!r} is not an integer") from None
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise InputValidationError(f"{path}: weight for region {key!r} must be a number")
        weights[rid] = float(value)
    try:
        return OcclusionDistribution(weights)
    except InputValidationError as err:
        raise InputValidationError(f"{path}: {err}") from err


def save_occlusion_distribution(path, dist: OcclusionDistribution) -> None:
    obj = {str(rid): dist.weights[rid] for rid in sorted(dist.weights)}
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def select_occlusion_region(
    regions: PartRegionMap,
    dist: OcclusionDistribution,
    rng: np.random.Generator,
) -> tuple[int, BinaryMask]:
    """Sample a region id present in the map according to the distribution
    restricted to the present ids, and return it with its mask."""
    present = regions.ids_present()
    if not present:
        raise DegenerateInputError("region map contains only background")
    local = dist.restricted(present)
    items = local.items_normalized()
    u = float(rng.random())
    acc = 0.0
    chosen = items[-1][0]
    for rid, p in items:
        acc += p
        if u < acc:
            chosen = rid
            break
    return chosen, regions.region_mask([chosen])


@dataclass(frozen=True)
class OccluMixSample:
    """One synthetic occlusion sample: the composited image, the composite
    mask (1 where partner pixels were pasted), and how it was built."""

    image: ImageBuffer
    composite: BinaryMask
    region_id: int
    partner_id: str | None = None
    translation: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if (self.composite.height, self.composite.width) != (self.image.height, self.image.width):
            raise InputValidationError("composite mask dims differ from image dims")


def compose_occlumix(
    person: ImageBuffer,
    partner: ImageBuffer,
    region_mask: BinaryMask,
    partner_cloth: BinaryMask,
    region_id: int = 0,
    partner_id: str | None = None,
    translation: tuple[int, int] | None = None,
    min_pixels: int = DEFAULT_MIN_COMPOSITE_PIXELS,
) -> OccluMixSample:
    """Paste partner pixels into region_mask & partner_cloth.

    Inside the intersection the output equals `partner` exactly; outside it
    equals `person` exactly.  Raises DegenerateInputError when the
    intersection holds fewer than `min_pixels` pixels.
    """
    dims = (person.height, person.width)
    for name, other in (("partner image", (partner.height, partner.width)),
                        ("region mask", (region_mask.height, region_mask.width)),
                        ("partner cloth mask", (partner_cloth.height, partner_cloth.width))):
        if other != dims:
            raise InputValidationError(f"{name} dims {other} differ from person dims {dims}")
    if person.channels != partner.channels:
        raise InputValidationError(
            f"channel mismatch: person {person.channels} vs partner {partner.channels}")

    composite = region_mask.data * partner_cloth.data
    area = int(composite.sum())
    if area < min_pixels:
        raise DegenerateInputError(
            f"composite region holds {area} pixels, below the minimum of {min_pixels}")
    sel = composite.astype(bool)[:, :, None]
    mixed = np.where(sel, partner.data, person.data)
    return OccluMixSample(
        image=ImageBuffer(mixed),
        composite=BinaryMask(composite),
        region_id=region_id,
        partner_id=partner_id,
        translation=translation,
    )


def _shift_zero_fill(arr: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(arr)
    h, w = arr.shape[:2]
    src_y0, src_y1 = max(0, -dy), min(h, h - dy)
    src_x0, src_x1 = max(0, -dx), min(w, w - dx)
    if src_y0 >= src_y1 or src_x0 >= src_x1:
        return out
    out[src_y0 + dy:src_y1 + dy, src_x0 + dx:src_x1 + dx] = arr[src_y0:src_y1, src_x0:src_x1]
    return out


def _mask_centroid(mask: np.ndarray) -> tuple[float, float]:
    ys, xs = np.nonzero(mask)
    return float(ys.mean()), float(xs.mean())


def align_partner_cloth(
    partner: ImageBuffer,
    partner_cloth: BinaryMask,
    region_mask: BinaryMask,
) -> tuple[ImageBuffer, BinaryMask, tuple[int, int]]:
    """Translate the partner's cloth mask (and image, so the pasted texture
    follows) so the mask centroid lands on the region centroid.

    Returns the shifted image, the shifted mask and the integer (dy, dx)
    applied.  Pixels shifted in from outside the frame are zero; they can
    never be pasted because the shifted mask is zero there too.
    """
    if partner_cloth.area == 0:
        raise DegenerateInputError("partner cloth mask is empty")
    if region_mask.area == 0:
        raise DegenerateInputError("selected region mask is empty")
    ry, rx = _mask_centroid(region_mask.data)
    cy, cx = _mask_centroid(partner_cloth.data)
    dy = int(round(ry - cy))
    dx = int(round(rx - cx))
    if dy == 0 and dx == 0:
        return partner, partner_cloth, (0, 0)
    shifted_mask = BinaryMask(_shift_zero_fill(partner_cloth.data, dy, dx))
    shifted_image = ImageBuffer(_shift_zero_fill(partner.data, dy, dx))
    return shifted_image, shifted_mask, (dy, dx)


def synthesize_entry(
    person: ImageBuffer,
    regions: PartRegionMap,
    partner: ImageBuffer,
    partner_cloth: BinaryMask,
    dist: OcclusionDistribution,
    rng: np.random.Generator,
    partner_id: str | None = None,
    align: bool = True,
    min_pixels: int = DEFAULT_MIN_COMPOSITE_PIXELS,
    attempts: int = DEFAULT_REGION_ATTEMPTS,
) -> tuple[OccluMixSample, dict]:
    """Build one sample for an already loaded person/partner pair.

    Draws a region, optionally centroid-aligns the partner cloth onto it,
    and composes.  A too-small intersection triggers a fresh region draw, up
    to `attempts` times; exhausting them raises DegenerateInputError.
    """
    if (regions.height, regions.width) != (person.height, person.width):
        raise InputValidationError("region map dims differ from person image dims")
    if attempts < 1:
        raise InputValidationError("attempts must be >= 1")
    if partner_cloth.area == 0:
        raise DegenerateInputError("partner cloth mask is empty")

    present = regions.ids_present()
    if not present:
        raise DegenerateInputError("region map contains only background")
    dist.restricted(present)  # fail fast when nothing is selectable

    last_error: DegenerateInputError | None = None
    for attempt in range(1, attempts + 1):
        region_id, region_mask = select_occlusion_region(regions, dist, rng)
        if align:
            moved, moved_cloth, shift = align_partner_cloth(partner, partner_cloth, region_mask)
        else:
            moved, moved_cloth, shift = partner, partner_cloth, None
        try:
            sample = compose_occlumix(
                person, moved, region_mask, moved_cloth,
                region_id=region_id, partner_id=partner_id,
                translation=shift, min_pixels=min_pixels,
            )
        except DegenerateInputError as err:
            last_error = err
            continue
        meta = {
            "region_id": region_id,
            "partner_id": partner_id,
            "translation": None if shift is None else [shift[0], shift[1]],
            "attempts": attempt,
            "composite_area": sample.composite.area,
        }
        return sample, meta
    raise DegenerateInputError(
        f"no region produced a composite of >= {min_pixels} pixels "
        f"in {attempts} attempts: {last_error}")


def _entry_seed_sequence(seed: int, index: int) -> np.random.SeedSequence:
    # entry seeds derive from (global seed, entry index) so workers never
    # share generator state and results are independent of thread count
    return np.random.SeedSequence(entropy=(int(seed), int(index)))


def entry_generator(seed: int, index: int) -> np.random.Generator:
    """Deterministic per-entry random generator."""
    return np.random.Generator(np.random.PCG64(_entry_seed_sequence(seed, index)))


def _partner_cloth_mask(entry: ManifestEntry, manifest: DatasetManifest,
                        cloth_ids: frozenset[int] | None) -> BinaryMask:
    label_path = manifest.resolve(entry, "label_map")
    if label_path is not None and cloth_ids is not None and label_path.is_file():
        labels = load_label_map(label_path)
        return extract_class_mask(labels, cloth_ids)
    mask_path = manifest.resolve(entry, "cloth_mask")
    if mask_path is not None:
        return load_mask(mask_path)
    raise InputValidationError(
        f"partner {entry.id!r} has neither a usable label map nor a cloth mask")


def synthesize_batch(
    manifest: DatasetManifest,
    pools: TexturePools,
    dist: OcclusionDistribution,
    mix_weight: float,
    seed: int,
    out_dir: str | Path | None = None,
    cloth_ids: frozenset[int] | None = None,
    align: bool = True,
    min_pixels: int = DEFAULT_MIN_COMPOSITE_PIXELS,
    attempts: int = DEFAULT_REGION_ATTEMPTS,
    threads: int | None = None,
) -> list[dict]:
    """Synthesise one sample per manifest entry.

    Entries are processed independently (optionally in parallel); each gets
    its own generator seeded from (seed, entry index), so the output is
    byte-identical for a given seed no matter the thread count.  Per-entry
    failures are recorded as skipped rows, not raised.

    With `out_dir` set, each successful entry writes `<id>_mix.png`,
    `<id>_composite.png` and `<id>.json` there.  Returns one row per entry
    in manifest order.
    """
    if not (0.0 <= mix_weight <= 1.0):
        raise InputValidationError(f"mix weight must lie in [0, 1], got {mix_weight}")
    out_path: Path | None = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

    def worker(item: tuple[int, ManifestEntry]) -> dict:
        index, entry = item
        rng = entry_generator(seed, index)
        try:
            person = load_image(manifest.resolve_required(entry, "person_image"))
            regions = load_region_map(manifest.resolve_required(entry, "region_map"))

            draw = sample_partner(pools, mix_weight, rng)
            partner_entry = manifest.by_id(draw.sample_id)
            partner = load_image(manifest.resolve_required(partner_entry, "person_image"))
            cloth = _partner_cloth_mask(partner_entry, manifest, cloth_ids)

            if (partner.height, partner.width) != (person.height, person.width):
                partner = resize_bilinear(partner, person.height, person.width)
            if (cloth.height, cloth.width) != (person.height, person.width):
                cloth = resize_nearest(cloth, person.height, person.width)

            sample, meta = synthesize_entry(
                person, regions, partner, cloth, dist, rng,
                partner_id=draw.sample_id, align=align,
                min_pixels=min_pixels, attempts=attempts,
            )
        except (InputValidationError, DegenerateInputError) as err:
            return {"id": entry.id, "status": "skipped", "reason": str(err)}

        row = {
            "id": entry.id,
            "status": "ok",
            "pool": draw.pool.value,
            "fell_back": draw.fell_back,
            "seed_index": index,
            **meta,
        }
        if out_path is not None:
            image_file = out_path / f"{entry.id}_mix.png"
            mask_file = out_path / f"{entry.id}_composite.png"
            meta_file = out_path / f"{entry.id}.json"
            save_image(image_file, sample.image)
            save_mask(mask_file, sample.composite)
            meta_file.write_text(json.dumps(row, indent=2, sort_keys=True) + "\n")
            row["outputs"] = {
                "image": image_file.name,
                "composite": mask_file.name,
                "metadata": meta_file.name,
            }
        return row

    return run_batch(list(enumerate(manifest.entries)), worker, threads)
