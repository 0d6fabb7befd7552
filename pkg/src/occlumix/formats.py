"""File codecs: PNG rasters, the FLO2 flow container, the FTEN feature
container, and the small JSON sidecars (pose, palette).

Binary layouts (see docs/formats.md for the byte-level reference):

  FLO2: magic "FLO2", u32 width, u32 height, then height*width little-endian
        float32 (dx, dy) pairs in row-major order.
  FTEN: magic "FTEN", u32 level count, then per level u32 C, u32 H, u32 W
        followed by C*H*W little-endian float32 values in C-order.

Both loaders reject truncated payloads and trailing bytes.  Images load as
value/255 and save as round(value*255), so an 8-bit file round-trips
exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .core import (
    BinaryMask,
    DEFAULT_REGION_COUNT,
    FlowField,
    ImageBuffer,
    LabelMap,
    Palette,
    PartRegionMap,
    PoseKeypoints,
    POSE_JOINT_COUNT,
)
from .errors import InputValidationError
from .losses import FeatureStack

FLOW_MAGIC = b"FLO2"
TENSOR_MAGIC = b"FTEN"

_LABEL_MODES = ("L", "P", "I", "I;16")


def _read_bytes(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as err:
        raise InputValidationError(f"cannot read {path}: {err}") from err


def _open_png(path: str | Path) -> Image.Image:
    try:
        img = Image.open(str(path))
        img.load()
        return img
    except FileNotFoundError as err:
        raise InputValidationError(f"file not found: {path}") from err
    except Exception as err:
        raise InputValidationError(f"cannot decode image {path}: {err}") from err


def load_image(path: str | Path) -> ImageBuffer:
    """Load a PNG as a float image in [0, 1]; greyscale files give one
    channel, everything else is converted to RGB."""
    img = _open_png(path)
    if img.mode == "L":
        arr = np.asarray(img, dtype=np.uint8)[:, :, None]
    else:
        arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return ImageBuffer(arr.astype(np.float64) / 255.0)


def save_image(path: str | Path, image: ImageBuffer) -> None:
    """Write a 1- or 3-channel image as an 8-bit PNG (values * 255, rounded)."""
    if image.channels not in (1, 3):
        raise InputValidationError(
            f"only 1- or 3-channel images can be written as PNG, got {image.channels}")
    arr = np.round(image.data * 255.0).astype(np.uint8)
    if image.channels == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(str(path), format="PNG")
    else:
        Image.fromarray(arr, mode="RGB").save(str(path), format="PNG")


def load_mask(path: str | Path) -> BinaryMask:
    """Load a PNG as a binary mask: any non-zero pixel is a member."""
    img = _open_png(path)
    if img.mode not in ("L", "1", "P"):
        img = img.convert("L")
    arr = np.asarray(img)
    return BinaryMask((arr != 0).astype(np.uint8))


def save_mask(path: str | Path, mask: BinaryMask) -> None:
    """Write a mask as an 8-bit PNG with members at 255."""
    Image.fromarray((mask.data * 255).astype(np.uint8), mode="L").save(str(path), format="PNG")


def _load_id_raster(path: str | Path) -> np.ndarray:
    img = _open_png(path)
    if img.mode not in _LABEL_MODES:
        raise InputValidationError(
            f"{path}: id rasters must be single-channel (mode L/P/I), got mode {img.mode}")
    return np.asarray(img).astype(np.int32)


def load_label_map(path: str | Path) -> LabelMap:
    """Load a single-channel PNG whose pixel values are class ids."""
    return LabelMap(_load_id_raster(path))


def save_label_map(path: str | Path, labels: LabelMap) -> None:
    if int(labels.data.max()) > 255:
        raise InputValidationError("class ids above 255 cannot be written to an 8-bit PNG")
    Image.fromarray(labels.data.astype(np.uint8), mode="L").save(str(path), format="PNG")


def load_region_map(path: str | Path, region_count: int = DEFAULT_REGION_COUNT) -> PartRegionMap:
    """Load a single-channel PNG whose pixel values are body-part region ids."""
    return PartRegionMap(_load_id_raster(path), region_count)


def save_region_map(path: str | Path, regions: PartRegionMap) -> None:
    if int(regions.data.max()) > 255:
        raise InputValidationError("region ids above 255 cannot be written to an 8-bit PNG")
    Image.fromarray(regions.data.astype(np.uint8), mode="L").save(str(path), format="PNG")


def load_flow(path: str | Path) -> FlowField:
    """Read a FLO2 file."""
    blob = _read_bytes(path)
    if len(blob) < 12:
        raise InputValidationError(f"{path}: too short for a FLO2 header")
    if blob[:4] != FLOW_MAGIC:
        raise InputValidationError(f"{path}: bad magic {blob[:4]!r}, expected {FLOW_MAGIC!r}")
    width, height = struct.unpack_from("<II", blob, 4)
    if width < 1 or height < 1:
        raise InputValidationError(f"{path}: invalid dims {width}x{height}")
    expected = 12 + width * height * 2 * 4
    if len(blob) < expected:
        raise InputValidationError(
            f"{path}: truncated payload, expected {expected} bytes, got {len(blob)}")
    if len(blob) > expected:
        raise InputValidationError(
            f"{path}: {len(blob) - expected} trailing bytes after payload")
    arr = np.frombuffer(blob, dtype="<f4", offset=12).reshape(height, width, 2)
    if not np.isfinite(arr).all():
        raise InputValidationError(f"{path}: flow contains non-finite values")
    return FlowField(arr.astype(np.float64))


def save_flow(path: str | Path, flow: FlowField) -> None:
    """Write a FLO2 file."""
    header = FLOW_MAGIC + struct.pack("<II", flow.width, flow.height)
    payload = np.ascontiguousarray(flow.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_feature_stack(path: str | Path) -> FeatureStack:
    """Read an FTEN file."""
    blob = _read_bytes(path)
    if len(blob) < 8:
        raise InputValidationError(f"{path}: too short for an FTEN header")
    if blob[:4] != TENSOR_MAGIC:
        raise InputValidationError(f"{path}: bad magic {blob[:4]!r}, expected {TENSOR_MAGIC!r}")
    (level_count,) = struct.unpack_from("<I", blob, 4)
    if level_count < 1:
        raise InputValidationError(f"{path}: feature stack declares no levels")
    offset = 8
    levels = []
    for i in range(level_count):
        if len(blob) < offset + 12:
            raise InputValidationError(f"{path}: truncated in level {i} header")
        c, h, w = struct.unpack_from("<III", blob, offset)
        offset += 12
        if c < 1 or h < 1 or w < 1:
            raise InputValidationError(f"{path}: invalid level {i} dims {c}x{h}x{w}")
        nbytes = c * h * w * 4
        if len(blob) < offset + nbytes:
            raise InputValidationError(f"{path}: truncated in level {i} payload")
        arr = np.frombuffer(blob, dtype="<f4", count=c * h * w, offset=offset).reshape(c, h, w)
        levels.append(arr.astype(np.float64))
        offset += nbytes
    if len(blob) > offset:
        raise InputValidationError(f"{path}: {len(blob) - offset} trailing bytes after payload")
    return FeatureStack(tuple(levels))


def save_feature_stack(path: str | Path, stack: FeatureStack) -> None:
    """Write an FTEN file."""
    parts = [TENSOR_MAGIC, struct.pack("<I", len(stack.levels))]
    for level in stack.levels:
        c, h, w = level.shape
        parts.append(struct.pack("<III", c, h, w))
        parts.append(np.ascontiguousarray(level, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_json(path: str | Path):
    """Read a JSON file, wrapping I/O and syntax failures as input errors."""
    blob = _read_bytes(path)
    try:
        return json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise InputValidationError(f"{path}: invalid JSON: {err}") from err


def load_pose(path: str | Path) -> PoseKeypoints:
    """Read a pose file: a JSON array of 18 [x, y, confidence] triples."""
    obj = read_json(path)
    if not isinstance(obj, list) or len(obj) != POSE_JOINT_COUNT:
        raise InputValidationError(
            f"{path}: pose must be an array of {POSE_JOINT_COUNT} joints")
    joints = []
    for i, triple in enumerate(obj):
        if (not isinstance(triple, list) or len(triple) != 3
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in triple)):
            raise InputValidationError(f"{path}: joint {i} must be [x, y, confidence]")
        joints.append([float(v) for v in triple])
    try:
        return PoseKeypoints(np.array(joints, dtype=np.float64))
    except InputValidationError as err:
        raise InputValidationError(f"{path}: {err}") from err


def save_pose(path: str | Path, pose: PoseKeypoints) -> None:
    rows = [[float(x), float(y), float(c)] for x, y, c in pose.joints]
    Path(path).write_text(json.dumps(rows, indent=2) + "\n")


def load_palette(path: str | Path) -> Palette:
    """Read a palette file: a JSON object mapping class name to integer id."""
    obj = read_json(path)
    if not isinstance(obj, dict) or not obj:
        raise InputValidationError(f"{path}: palette must be a non-empty JSON object")
    classes: dict[str, int] = {}
    for name, cid in obj.items():
        if not isinstance(cid, int) or isinstance(cid, bool):
            raise InputValidationError(f"{path}: id for class {name!r} must be an integer")
        classes[str(name)] = cid
    try:
        return Palette(classes)
    except InputValidationError as err:
        raise InputValidationError(f"{path}: {err}") from err


def save_palette(path: str | Path, palette: Palette) -> None:
    Path(path).write_text(json.dumps(palette.classes, indent=2, sort_keys=True) + "\n")
