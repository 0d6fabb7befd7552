"""Core raster value types and the operations shared by every stage.

All types are immutable after construction: the wrapped numpy arrays are
copied, made C-contiguous and flagged read-only, so functions can pass them
around without defensive copies.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import InputValidationError

# OpenPose/COCO 18-joint ordering used by every pose file in the toolkit.
POSE_JOINT_NAMES = (
    "nose",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_eye",
    "left_eye",
    "right_ear",
    "left_ear",
)
POSE_JOINT_COUNT = len(POSE_JOINT_NAMES)

# Heatmap spread is calibrated at 3 px for a 256 px tall frame and scales
# linearly with frame height.
POSE_SIGMA_BASE = 3.0
POSE_SIGMA_REFERENCE_HEIGHT = 256

DEFAULT_REGION_COUNT = 24


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr or out.base is arr:
        out = out.copy()
    out.flags.writeable = False
    return out


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InputValidationError(message)


@dataclass(frozen=True)
class ImageBuffer:
    """Float raster of shape (height, width, channels) with values in [0, 1].

    A 2-D array is accepted and treated as a single channel.  PNG files can
    only round-trip 1- or 3-channel buffers; wider stacks (pose heatmaps,
    feature maps) exist in memory and in the tensor file format only.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        _require(arr.ndim == 3, f"image must be 2-D or 3-D, got shape {arr.shape}")
        _require(all(s >= 1 for s in arr.shape), f"image dims must be positive, got {arr.shape}")
        _require(bool(np.isfinite(arr).all()), "image contains non-finite values")
        _require(float(arr.min()) >= 0.0 and float(arr.max()) <= 1.0,
                 "image values must lie in [0, 1]")
        object.__setattr__(self, "data", _readonly(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel set membership, shape (height, width), values in {0, 1}."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        _require(arr.ndim == 2, f"mask must be 2-D, got shape {arr.shape}")
        _require(all(s >= 1 for s in arr.shape), f"mask dims must be positive, got {arr.shape}")
        if arr.dtype == bool:
            arr = arr.astype(np.uint8)
        else:
            values = np.unique(arr)
            _require(bool(np.isin(values, (0, 1)).all()),
                     "mask values must be 0 or 1")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "data", _readonly(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def area(self) -> int:
        """Number of set pixels."""
        return int(self.data.sum())


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel semantic class id, shape (height, width), ids >= 0."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        _require(arr.ndim == 2, f"label map must be 2-D, got shape {arr.shape}")
        _require(all(s >= 1 for s in arr.shape),
                 f"label map dims must be positive, got {arr.shape}")
        _require(np.issubdtype(arr.dtype, np.integer), "label map must hold integers")
        _require(int(arr.min()) >= 0, "label ids must be >= 0")
        object.__setattr__(self, "data", _readonly(arr.astype(np.int32)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def ids_present(self) -> tuple[int, ...]:
        return tuple(int(v) for v in np.unique(self.data))


@dataclass(frozen=True)
class PartRegionMap:
    """Per-pixel body-part region id, 0 = background, ids in [0, region_count]."""

    data: np.ndarray
    region_count: int = DEFAULT_REGION_COUNT

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        _require(arr.ndim == 2, f"region map must be 2-D, got shape {arr.shape}")
        _require(all(s >= 1 for s in arr.shape),
                 f"region map dims must be positive, got {arr.shape}")
        _require(np.issubdtype(arr.dtype, np.integer), "region map must hold integers")
        _require(self.region_count >= 1, "region_count must be >= 1")
        _require(int(arr.min()) >= 0 and int(arr.max()) <= self.region_count,
                 f"region ids must lie in [0, {self.region_count}]")
        object.__setattr__(self, "data", _readonly(arr.astype(np.int32)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def ids_present(self) -> tuple[int, ...]:
        """Region ids that actually occur, background excluded."""
        ids = np.unique(self.data)
        return tuple(int(v) for v in ids if v != 0)

    def region_mask(self, ids: Iterable[int]) -> BinaryMask:
        wanted = sorted({int(i) for i in ids})
        _require(len(wanted) > 0, "at least one region id required")
        for i in wanted:
            _require(1 <= i <= self.region_count,
                     f"region id {i} outside [1, {self.region_count}]")
        return BinaryMask(np.isin(self.data, wanted).astype(np.uint8))


@dataclass(frozen=True)
class PoseKeypoints:
    """18 skeleton joints in OpenPose/COCO order, each (x, y, confidence)."""

    joints: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.joints, dtype=np.float64)
        _require(arr.shape == (POSE_JOINT_COUNT, 3),
                 f"pose must have shape ({POSE_JOINT_COUNT}, 3), got {arr.shape}")
        _require(bool(np.isfinite(arr).all()), "pose contains non-finite values")
        conf = arr[:, 2]
        _require(float(conf.min()) >= 0.0 and float(conf.max()) <= 1.0,
                 "joint confidence must lie in [0, 1]")
        object.__setattr__(self, "joints", _readonly(arr))

    def visible(self) -> np.ndarray:
        """Boolean vector of joints with positive confidence."""
        return self.joints[:, 2] > 0.0


@dataclass(frozen=True)
class FlowField:
    """Dense displacement field, shape (height, width, 2) holding (dx, dy) in
    pixels."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        _require(arr.ndim == 3 and arr.shape[2] == 2,
                 f"flow must have shape (H, W, 2), got {arr.shape}")
        _require(all(s >= 1 for s in arr.shape[:2]),
                 f"flow dims must be positive, got {arr.shape}")
        _require(bool(np.isfinite(arr).all()), "flow contains non-finite values")
        object.__setattr__(self, "data", _readonly(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FlowPyramid:
    """Flow fields ordered coarsest first; each scale roughly doubles both
    dims of the previous one (odd sizes round either way)."""

    levels: tuple[FlowField, ...]

    def __post_init__(self) -> None:
        levels = tuple(self.levels)
        _require(len(levels) >= 1, "pyramid needs at least one level")
        for field_ in levels:
            _require(isinstance(field_, FlowField), "pyramid levels must be FlowField")
        for prev, nxt in zip(levels, levels[1:]):
            for a, b, axis in ((prev.height, nxt.height, "height"),
                               (prev.width, nxt.width, "width")):
                _require(abs(b - 2 * a) <= 1,
                         f"pyramid {axis} {b} does not double {a} (within rounding)")
        object.__setattr__(self, "levels", levels)

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)


@dataclass(frozen=True)
class Palette:
    """Semantic class palette: unique name -> unique non-negative id."""

    classes: dict[str, int]

    def __post_init__(self) -> None:
        _require(len(self.classes) >= 1, "palette must declare at least one class")
        seen_ids: set[int] = set()
        for name, cid in self.classes.items():
            _require(isinstance(name, str) and name != "", "class names must be non-empty strings")
            _require(isinstance(cid, int) and not isinstance(cid, bool) and cid >= 0,
                     f"class id for {name!r} must be a non-negative integer")
            _require(cid not in seen_ids, f"duplicate class id {cid}")
            seen_ids.add(cid)
        object.__setattr__(self, "classes", dict(self.classes))

    def ids(self) -> frozenset[int]:
        return frozenset(self.classes.values())

    def id_of(self, name: str) -> int:
        try:
            return self.classes[name]
        except KeyError:
            raise InputValidationError(f"unknown class name {name!r}") from None

    def ids_for(self, names: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.id_of(n) for n in names)

    def name_of(self, cid: int) -> str | None:
        for name, value in self.classes.items():
            if value == cid:
                return name
        return None


# Default class-name groupings for palettes following the usual human-parsing
# vocabulary.  Overridable from the command line; names absent from a given
# palette raise at lookup time.
DEFAULT_CLOTH_CLASSES = ("upper-clothes",)
DEFAULT_BODY_CLASSES = ("hair", "face", "left-arm", "right-arm", "pants")


@dataclass(frozen=True)
class MaskGroups:
    """Class-id groupings: which palette ids make up worn clothing and which
    make up the visible body parts."""

    cloth_ids: frozenset[int]
    body_ids: frozenset[int]

    def __post_init__(self) -> None:
        _require(len(self.cloth_ids) >= 1, "cloth group must contain at least one id")
        _require(len(self.body_ids) >= 1, "body group must contain at least one id")
        object.__setattr__(self, "cloth_ids", frozenset(int(i) for i in self.cloth_ids))
        object.__setattr__(self, "body_ids", frozenset(int(i) for i in self.body_ids))
        overlap = self.cloth_ids & self.body_ids
        _require(not overlap, f"classes {sorted(overlap)} appear in both groups")

    @classmethod
    def from_palette(
        cls,
        palette: Palette,
        cloth_classes: Sequence[str] = DEFAULT_CLOTH_CLASSES,
        body_classes: Sequence[str] = DEFAULT_BODY_CLASSES,
    ) -> "MaskGroups":
        return cls(
            cloth_ids=frozenset(palette.ids_for(cloth_classes)),
            body_ids=frozenset(palette.ids_for(body_classes)),
        )


def extract_class_mask(
    labels: LabelMap,
    ids: Iterable[int],
    palette: Palette | None = None,
) -> BinaryMask:
    """Union mask of the given class ids.

    When a palette is supplied every requested id must be declared in it;
    an unknown id raises InputValidationError.
    """
    wanted = sorted({int(i) for i in ids})
    _require(len(wanted) > 0, "at least one class id required")
    if palette is not None:
        declared = palette.ids()
        for cid in wanted:
            _require(cid in declared, f"class id {cid} not declared in palette")
    return BinaryMask(np.isin(labels.data, wanted).astype(np.uint8))


def default_pose_sigma(height: int) -> float:
    """Heatmap standard deviation for a frame of the given height."""
    return POSE_SIGMA_BASE * height / POSE_SIGMA_REFERENCE_HEIGHT


def rasterize_pose(
    pose: PoseKeypoints,
    height: int,
    width: int,
    sigma: float | None = None,
) -> ImageBuffer:
    """Render the skeleton as an 18-channel Gaussian heatmap stack.

    Channel j holds exp(-d^2 / (2 sigma^2)) around joint j, peak value 1.
    Joints with zero confidence, or whose coordinates fall outside the frame,
    produce an all-zero channel.
    """
    _require(height >= 1 and width >= 1, "heatmap dims must be positive")
    if sigma is None:
        sigma = default_pose_sigma(height)
    _require(sigma > 0.0, "sigma must be positive")

    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    stack = np.zeros((height, width, POSE_JOINT_COUNT), dtype=np.float64)
    inv = 1.0 / (2.0 * sigma * sigma)
    for j in range(POSE_JOINT_COUNT):
        x, y, conf = pose.joints[j]
        if conf <= 0.0:
            continue
        if not (0.0 <= x < width and 0.0 <= y < height):
            continue  # off-frame joints are treated as invisible
        d2 = (xs - x) ** 2 + (ys - y) ** 2
        stack[:, :, j] = np.exp(-d2 * inv)
    return ImageBuffer(stack)


def _nearest_indices(src_dim: int, dst_dim: int) -> np.ndarray:
    # floor(dst * src / dst) in exact integer arithmetic
    dst = np.arange(dst_dim, dtype=np.int64)
    return (dst * src_dim) // dst_dim


def resize_nearest(raster, height: int, width: int):
    """Nearest-neighbour resize for id-valued rasters.

    Accepts BinaryMask, LabelMap or PartRegionMap and returns the same type.
    Source pixel for destination index d along a dim of size n mapping to a
    source dim of size m is floor(d * m / n), so no new values are invented
    and an identity resize is exact.
    """
    _require(height >= 1 and width >= 1, "target dims must be positive")
    if isinstance(raster, BinaryMask):
        make = BinaryMask
        arr = raster.data
    elif isinstance(raster, PartRegionMap):
        def make(a, count=raster.region_count):
            return PartRegionMap(a, count)
        arr = raster.data
    elif isinstance(raster, LabelMap):
        make = LabelMap
        arr = raster.data
    else:
        raise InputValidationError(
            f"resize_nearest expects a mask, label map or region map, got {type(raster).__name__}")
    rows = _nearest_indices(arr.shape[0], height)
    cols = _nearest_indices(arr.shape[1], width)
    return make(arr[rows[:, None], cols[None, :]])


def resize_bilinear(image: ImageBuffer, height: int, width: int) -> ImageBuffer:
    """Bilinear resize with centre-aligned sampling and edge clamping."""
    _require(height >= 1 and width >= 1, "target dims must be positive")
    src = image.data
    sh, sw = src.shape[0], src.shape[1]
    if sh == height and sw == width:
        return image

    def _coords(dst_dim: int, src_dim: int) -> np.ndarray:
        scale = src_dim / dst_dim
        c = (np.arange(dst_dim, dtype=np.float64) + 0.5) * scale - 0.5
        return np.clip(c, 0.0, src_dim - 1.0)

    ys = _coords(height, sh)
    xs = _coords(width, sw)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    top = src[y0[:, None], x0[None, :], :] * (1.0 - wx) + src[y0[:, None], x1[None, :], :] * wx
    bot = src[y1[:, None], x0[None, :], :] * (1.0 - wx) + src[y1[:, None], x1[None, :], :] * wx
    out = top * (1.0 - wy) + bot * wy
    # interpolation of in-range values stays in range up to rounding
    return ImageBuffer(np.clip(out, 0.0, 1.0))
