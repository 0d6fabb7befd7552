"""Grey-level co-occurrence texture statistics and complexity pools.

A garment image is reduced to luma, quantised to a small number of grey
levels, and summarised by a normalised co-occurrence matrix over a fixed set
of pixel offsets.  The Shannon entropy of that matrix separates busy prints
from flat fabrics; entries land in a complex or a simple pool, and a mixing
weight controls which pool partners are drawn from.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, ImageBuffer
from .errors import DegenerateInputError, InputValidationError

DEFAULT_LEVELS = 32
# (row step, column step); each offset is also counted in the opposite
# direction, making the matrix symmetric.
DEFAULT_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))
DEFAULT_ENTROPY_THRESHOLD = 2.5

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class TextureClass(enum.Enum):
    SIMPLE = "simple"
    COMPLEX = "complex"


@dataclass(frozen=True)
class GlcmParams:
    """Quantisation level count and the neighbour offsets to accumulate."""

    levels: int = DEFAULT_LEVELS
    offsets: tuple[tuple[int, int], ...] = DEFAULT_OFFSETS

    def __post_init__(self) -> None:
        if self.levels < 2:
            raise InputValidationError("levels must be >= 2")
        offsets = tuple((int(r), int(c)) for r, c in self.offsets)
        if len(offsets) == 0:
            raise InputValidationError("at least one offset required")
        for r, c in offsets:
            if r == 0 and c == 0:
                raise InputValidationError("offset (0, 0) is not a neighbour")
        object.__setattr__(self, "offsets", offsets)


@dataclass(frozen=True)
class GlcmMatrix:
    """Normalised co-occurrence probabilities, shape (levels, levels)."""

    probabilities: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.probabilities, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InputValidationError(f"co-occurrence matrix must be square, got {arr.shape}")
        if not np.isfinite(arr).all() or arr.min() < 0.0:
            raise InputValidationError("probabilities must be finite and non-negative")
        if abs(float(arr.sum()) - 1.0) > 1e-9:
            raise InputValidationError("probabilities must sum to 1")
        arr = np.ascontiguousarray(arr).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "probabilities", arr)

    @property
    def levels(self) -> int:
        return self.probabilities.shape[0]


def to_grayscale(image: ImageBuffer) -> np.ndarray:
    """Luma plane of a 1- or 3-channel image, shape (H, W)."""
    if image.channels == 1:
        return image.data[:, :, 0]
    if image.channels == 3:
        r, g, b = LUMA_WEIGHTS
        return r * image.data[:, :, 0] + g * image.data[:, :, 1] + b * image.data[:, :, 2]
    raise InputValidationError(f"expected 1 or 3 channels, got {image.channels}")


def quantize_gray(gray: np.ndarray, levels: int) -> np.ndarray:
    """Map [0, 1] values onto integer levels 0 .. levels-1 (uniform bins)."""
    q = np.floor(gray * levels).astype(np.int64)
    return np.clip(q, 0, levels - 1)


def compute_glcm(
    image: ImageBuffer,
    params: GlcmParams = GlcmParams(),
    mask: BinaryMask | None = None,
) -> GlcmMatrix:
    """Normalised grey-level co-occurrence matrix of an image.

    Pixels are reduced to luma and quantised to `params.levels` uniform bins
    over [0, 1].  For every offset, each in-bounds ordered pixel pair is
    counted in both directions, so the matrix is symmetric.  With a mask,
    only pairs whose two endpoints are both inside the mask count.

    Raises DegenerateInputError when no pair survives (image too small for
    every offset, or the mask isolates every pixel).
    """
    q = quantize_gray(to_grayscale(image), params.levels)
    if mask is not None:
        if (mask.height, mask.width) != (image.height, image.width):
            raise InputValidationError(
                f"mask dims {(mask.height, mask.width)} differ from "
                f"image dims {(image.height, image.width)}")
        inside = mask.data.astype(bool)
    else:
        inside = None

    k = params.levels
    counts = np.zeros((k, k), dtype=np.int64)
    h, w = q.shape
    for dr, dc in params.offsets:
        if abs(dr) >= h or abs(dc) >= w:
            continue
        r0, r1 = max(0, -dr), min(h, h - dr)
        c0, c1 = max(0, -dc), min(w, w - dc)
        src = q[r0:r1, c0:c1]
        dst = q[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
        if inside is not None:
            keep = inside[r0:r1, c0:c1] & inside[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
            src = src[keep]
            dst = dst[keep]
        pair = np.bincount(src.ravel() * k + dst.ravel(), minlength=k * k).reshape(k, k)
        counts += pair
    counts = counts + counts.T  # opposite directions
    total = int(counts.sum())
    if total == 0:
        raise DegenerateInputError("no co-occurring pixel pairs under the given offsets and mask")
    return GlcmMatrix(counts.astype(np.float64) / total)


def glcm_entropy(glcm: GlcmMatrix) -> float:
    """Shannon entropy (natural log) of the co-occurrence distribution.

    Zero cells contribute zero.  Bounded by 2 * ln(levels).
    """
    p = glcm.probabilities
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum()) + 0.0  # avoid -0.0 for a point mass


def classify_texture(entropy: float, threshold: float = DEFAULT_ENTROPY_THRESHOLD) -> TextureClass:
    """Complex at or above the threshold, simple below it."""
    if not np.isfinite(entropy) or entropy < 0.0:
        raise InputValidationError(f"entropy must be finite and >= 0, got {entropy}")
    return TextureClass.COMPLEX if entropy >= threshold else TextureClass.SIMPLE


@dataclass(frozen=True)
class TexturePools:
    """Sample ids split by texture class; the two pools never overlap."""

    complex_ids: tuple[str, ...]
    simple_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        complex_ids = tuple(str(i) for i in self.complex_ids)
        simple_ids = tuple(str(i) for i in self.simple_ids)
        if len(set(complex_ids)) != len(complex_ids) or len(set(simple_ids)) != len(simple_ids):
            raise InputValidationError("duplicate ids within a pool")
        overlap = set(complex_ids) & set(simple_ids)
        if overlap:
            raise InputValidationError(f"ids in both pools: {sorted(overlap)}")
        object.__setattr__(self, "complex_ids", complex_ids)
        object.__setattr__(self, "simple_ids", simple_ids)

    def pool(self, cls: TextureClass) -> tuple[str, ...]:
        return self.complex_ids if cls is TextureClass.COMPLEX else self.simple_ids

    @classmethod
    def from_labels(cls, labelled: dict[str, TextureClass]) -> "TexturePools":
        complex_ids = tuple(i for i, c in labelled.items() if c is TextureClass.COMPLEX)
        simple_ids = tuple(i for i, c in labelled.items() if c is TextureClass.SIMPLE)
        return cls(complex_ids=complex_ids, simple_ids=simple_ids)


@dataclass(frozen=True)
class PartnerDraw:
    """Outcome of one partner draw: the id, the pool it came from, and
    whether the requested pool was empty and the other one was used."""

    sample_id: str
    pool: TextureClass
    fell_back: bool


def sample_partner(
    pools: TexturePools,
    mix_weight: float,
    rng: np.random.Generator,
) -> PartnerDraw:
    """Draw a partner id: complex pool with probability `mix_weight`, simple
    pool otherwise, then uniformly within the pool.

    A weight of 0 never touches the complex pool and a weight of 1 always
    does.  If the selected pool is empty the other pool is used and the draw
    is flagged; if both are empty the draw is degenerate.
    """
    if not (0.0 <= mix_weight <= 1.0):
        raise InputValidationError(f"mix weight must lie in [0, 1], got {mix_weight}")
    if not pools.complex_ids and not pools.simple_ids:
        raise DegenerateInputError("both texture pools are empty")

    want = TextureClass.COMPLEX if rng.random() < mix_weight else TextureClass.SIMPLE
    fell_back = False
    chosen = want
    if not pools.pool(chosen):
        chosen = TextureClass.SIMPLE if want is TextureClass.COMPLEX else TextureClass.COMPLEX
        fell_back = True
    ids = pools.pool(chosen)
    idx = int(rng.integers(len(ids)))
    return PartnerDraw(sample_id=ids[idx], pool=chosen, fell_back=fell_back)
