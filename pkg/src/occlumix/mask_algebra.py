"""Parsing-mask algebra for building occlusion-aware training pairs.

Every operation is a pure function over binary masks of identical dims.
The dataflow, given a person's semantic label map, the mask of the garment
as it appears in the try-on result, the skeleton, and a defect mask:

  visible body   = body & ~tryon cloth          (body parts still visible)
  exposed skin   = tryon cloth & ~worn cloth    (skin the new garment fails
                                                 to cover in the source)
  potential body = visible body | exposed skin  (everywhere a body part may
                                                 legitimately appear)
  degraded pair  = body & ~defect, worn cloth | defect

The (pose, potential body) -> target body pair trains a layout generator;
the degraded pair -> target body trains a layout restorer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, LabelMap, MaskGroups, PoseKeypoints, extract_class_mask, resize_nearest
from .errors import InputValidationError


def _check_same_dims(*masks: BinaryMask) -> None:
    first = masks[0]
    for m in masks[1:]:
        if (m.height, m.width) != (first.height, first.width):
            raise InputValidationError(
                f"mask dims differ: {(first.height, first.width)} vs {(m.height, m.width)}")


def body_parts_in_tryon(body: BinaryMask, tryon_cloth: BinaryMask) -> BinaryMask:
    """Body-part pixels that stay visible once the try-on garment is on."""
    _check_same_dims(body, tryon_cloth)
    return BinaryMask(body.data * (1 - tryon_cloth.data))


def strange_fabric(tryon_cloth: BinaryMask, worn_cloth: BinaryMask) -> BinaryMask:
    """Pixels the try-on garment covers that the originally worn garment did
    not; in the source image these show skin or other non-cloth content."""
    _check_same_dims(tryon_cloth, worn_cloth)
    return BinaryMask(tryon_cloth.data * (1 - worn_cloth.data))


def potential_body_location(visible_body: BinaryMask, exposed: BinaryMask) -> BinaryMask:
    """Union of visible body parts and newly exposed skin (saturating)."""
    _check_same_dims(visible_body, exposed)
    return BinaryMask(np.logical_or(visible_body.data, exposed.data).astype(np.uint8))


def simulate_parsing_failure(
    body: BinaryMask,
    worn_cloth: BinaryMask,
    defect: BinaryMask,
) -> tuple[BinaryMask, BinaryMask]:
    """Degrade a clean (body, cloth) layout with a defect mask.

    The defect eats into the body channel and is absorbed by the cloth
    channel (saturating union), mimicking a parser that mislabels occluded
    body parts as garment.  Returns (degraded_body, degraded_cloth).
    """
    _check_same_dims(body, worn_cloth, defect)
    degraded_body = BinaryMask(body.data * (1 - defect.data))
    degraded_cloth = BinaryMask(np.logical_or(worn_cloth.data, defect.data).astype(np.uint8))
    return degraded_body, degraded_cloth


def _shift_zero_fill(arr: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(arr)
    h, w = arr.shape[:2]
    src_y0, src_y1 = max(0, -dy), min(h, h - dy)
    src_x0, src_x1 = max(0, -dx), min(w, w - dx)
    if src_y0 >= src_y1 or src_x0 >= src_x1:
        return out
    out[src_y0 + dy:src_y1 + dy, src_x0 + dx:src_x1 + dx] = arr[src_y0:src_y1, src_x0:src_x1]
    return out


def place_defect_mask(
    defect: BinaryMask,
    height: int,
    width: int,
    rng: np.random.Generator,
) -> tuple[BinaryMask, dict]:
    """Fit a raw defect mask to the target frame with a seeded perturbation.

    The mask is resized (nearest) to the frame, flipped horizontally and
    vertically each with probability 1/2, then shifted by up to a quarter of
    each dim with zero fill.  Returns the placed mask and the placement
    parameters so runs can be replayed.
    """
    placed = resize_nearest(defect, height, width)
    arr = placed.data
    flip_h = bool(rng.random() < 0.5)
    flip_v = bool(rng.random() < 0.5)
    if flip_h:
        arr = arr[:, ::-1]
    if flip_v:
        arr = arr[::-1, :]
    max_dy = height // 4
    max_dx = width // 4
    dy = int(rng.integers(-max_dy, max_dy + 1))
    dx = int(rng.integers(-max_dx, max_dx + 1))
    arr = _shift_zero_fill(np.ascontiguousarray(arr), dy, dx)
    meta = {
        "flip_horizontal": flip_h,
        "flip_vertical": flip_v,
        "shift": [dy, dx],
    }
    return BinaryMask(arr), meta


@dataclass(frozen=True)
class SpnSample:
    """One parsing-refinement training sample.

    generator pair: (pose, potential_body) -> target_body
    restorer pair:  (degraded_body, degraded_cloth) -> target_body
    """

    pose: PoseKeypoints
    potential_body: BinaryMask
    target_body: BinaryMask
    degraded_body: BinaryMask
    degraded_cloth: BinaryMask

    def __post_init__(self) -> None:
        _check_same_dims(self.potential_body, self.target_body,
                         self.degraded_body, self.degraded_cloth)


def build_spn_samples(
    labels: LabelMap,
    tryon_cloth: BinaryMask,
    pose: PoseKeypoints,
    defect: BinaryMask,
    groups: MaskGroups,
) -> SpnSample:
    """Run the full mask dataflow for one person.

    `labels` is the person's semantic parse, `tryon_cloth` the garment mask
    aligned to the same frame, and `defect` an already placed defect mask of
    the same dims (see place_defect_mask).
    """
    if (labels.height, labels.width) != (tryon_cloth.height, tryon_cloth.width):
        raise InputValidationError(
            f"label map dims {(labels.height, labels.width)} differ from "
            f"try-on cloth mask dims {(tryon_cloth.height, tryon_cloth.width)}")
    worn_cloth = extract_class_mask(labels, groups.cloth_ids)
    body = extract_class_mask(labels, groups.body_ids)
    _check_same_dims(body, defect)

    visible = body_parts_in_tryon(body, tryon_cloth)
    exposed = strange_fabric(tryon_cloth, worn_cloth)
    potential = potential_body_location(visible, exposed)
    degraded_body, degraded_cloth = simulate_parsing_failure(body, worn_cloth, defect)
    return SpnSample(
        pose=pose,
        potential_body=potential,
        target_body=body,
        degraded_body=degraded_body,
        degraded_cloth=degraded_cloth,
    )
