"""Dense-flow utilities: backward warping and a second-order smoothness
penalty.

The smoothness term sums a Charbonnier penalty of the discrete second
difference of the flow along four directions (horizontal, vertical, both
diagonals), over every pyramid scale, both components, skipping stencils
that would reach outside the frame.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .core import FlowField, FlowPyramid, ImageBuffer
from .errors import DegenerateInputError, InputValidationError, NumericalError

# (row step, column step): vertical, horizontal, and the two diagonals.
SECOND_DIFF_DIRECTIONS = ((0, 1), (1, 0), (1, 1), (1, -1))

DEFAULT_EPSILON = 1e-3
DEFAULT_ALPHA = 0.45


@dataclass(frozen=True)
class CharbonnierParams:
    """Parameters of the penalty (t^2 + epsilon^2) ** alpha.

    epsilon = 0 degrades gracefully to |t| ** (2 alpha); the default keeps a
    strictly positive floor of epsilon ** (2 alpha) at t = 0.
    """

    epsilon: float = DEFAULT_EPSILON
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self) -> None:
        if not np.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise InputValidationError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if not np.isfinite(self.alpha) or not (0.0 < self.alpha <= 1.0):
            raise InputValidationError(f"alpha must lie in (0, 1], got {self.alpha}")


def charbonnier(t: np.ndarray | float, params: CharbonnierParams = CharbonnierParams()) -> np.ndarray:
    """Elementwise (t^2 + epsilon^2) ** alpha."""
    t = np.asarray(t, dtype=np.float64)
    return (t * t + params.epsilon * params.epsilon) ** params.alpha


def warp_by_flow(source: ImageBuffer, flow: FlowField) -> ImageBuffer:
    """Backward-warp an image: output(p) samples source at p + flow(p).

    Sampling is bilinear; coordinates outside the frame are clamped to the
    border.  Source and flow dims must agree and fix the output dims.
    """
    if (source.height, source.width) != (flow.height, flow.width):
        raise InputValidationError(
            f"source dims {(source.height, source.width)} differ from "
            f"flow dims {(flow.height, flow.width)}")
    h, w = flow.height, flow.width
    grid_y, grid_x = np.meshgrid(np.arange(h, dtype=np.float64),
                                 np.arange(w, dtype=np.float64), indexing="ij")
    sx = np.clip(grid_x + flow.data[:, :, 0], 0.0, w - 1.0)
    sy = np.clip(grid_y + flow.data[:, :, 1], 0.0, h - 1.0)

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (sx - x0)[:, :, None]
    wy = (sy - y0)[:, :, None]

    src = source.data
    top = src[y0, x0, :] * (1.0 - wx) + src[y0, x1, :] * wx
    bot = src[y1, x0, :] * (1.0 - wx) + src[y1, x1, :] * wx
    out = top * (1.0 - wy) + bot * wy
    return ImageBuffer(np.clip(out, 0.0, 1.0))


def _as_levels(flows: FlowPyramid | Sequence[FlowField]) -> tuple[FlowField, ...]:
    if isinstance(flows, FlowPyramid):
        return flows.levels
    return FlowPyramid(tuple(flows)).levels


def second_order_smoothness(
    flows: FlowPyramid | Sequence[FlowField],
    params: CharbonnierParams = CharbonnierParams(),
) -> float:
    """Charbonnier-penalised second-order smoothness of a flow pyramid.

    For every scale, every direction pi in SECOND_DIFF_DIRECTIONS, every
    pixel p whose neighbours p - pi and p + pi are both in bounds, and both
    flow components independently, accumulates
    penalty(f[p - pi] + f[p + pi] - 2 f[p]).

    A flow that is affine in pixel position has all second differences zero,
    so the result is exactly (term count) * epsilon ** (2 alpha).

    Raises DegenerateInputError when any scale is smaller than 3x3 (no
    direction would have a single valid stencil there).
    """
    levels = _as_levels(flows)
    for level in levels:
        if level.height < 3 or level.width < 3:
            raise DegenerateInputError(
                f"scale {level.height}x{level.width} is smaller than 3x3")
    total = 0.0
    for level in levels:
        f = level.data
        h, w = level.height, level.width
        for dr, dc in SECOND_DIFF_DIRECTIONS:
            mr, mc = abs(dr), abs(dc)
            if h - 2 * mr <= 0 or w - 2 * mc <= 0:
                continue
            centre = f[mr:h - mr, mc:w - mc, :]
            back = f[mr - dr:h - mr - dr, mc - dc:w - mc - dc, :]
            fwd = f[mr + dr:h - mr + dr, mc + dc:w - mc + dc, :]
            second = back + fwd - 2.0 * centre
            total += float(charbonnier(second, params).sum())
    if not math.isfinite(total):
        raise NumericalError(f"smoothness penalty overflowed: {total}")
    return total


def second_order_term_count(flows: FlowPyramid | Sequence[FlowField]) -> int:
    """Number of penalty terms second_order_smoothness sums (both components
    counted)."""
    count = 0
    for level in _as_levels(flows):
        h, w = level.height, level.width
        for dr, dc in SECOND_DIFF_DIRECTIONS:
            rows = h - 2 * abs(dr)
            cols = w - 2 * abs(dc)
            if rows > 0 and cols > 0:
                count += rows * cols * 2
    return count
