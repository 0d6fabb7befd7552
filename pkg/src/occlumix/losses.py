"""Reconstruction losses: pixel L1, multi-level perceptual L1, and their
weighted combination.

Feature stacks come either from files (any level list is accepted) or from a
small built-in bank of seeded, orthogonalised stride-2 convolutions, which
stands in when no external feature extractor output is available.  All
losses are means (per level), so values are comparable across resolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import ImageBuffer
from .errors import InputValidationError, NumericalError

DEFAULT_BANK_SEED = 7
_BANK_CHANNELS = (8, 16, 32)
_BANK_KERNEL = 3


@dataclass(frozen=True)
class LossWeights:
    """Weights of the pixel and perceptual terms."""

    alpha_l: float = 1.0
    alpha_p: float = 1.0

    def __post_init__(self) -> None:
        for name, value in (("alpha_l", self.alpha_l), ("alpha_p", self.alpha_p)):
            if not np.isfinite(value) or value < 0.0:
                raise InputValidationError(f"{name} must be finite and >= 0, got {value}")
        if self.alpha_l == 0.0 and self.alpha_p == 0.0:
            raise InputValidationError("alpha_l and alpha_p must not both be zero")


@dataclass(frozen=True)
class FeatureStack:
    """Feature tensors from successive extractor levels, each (C, H, W)."""

    levels: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.levels) < 1:
            raise InputValidationError("feature stack needs at least one level")
        frozen = []
        for i, level in enumerate(self.levels):
            arr = np.asarray(level, dtype=np.float64)
            if arr.ndim != 3:
                raise InputValidationError(
                    f"level {i} must have shape (C, H, W), got {arr.shape}")
            if not np.isfinite(arr).all():
                raise NumericalError(f"level {i} contains non-finite values")
            arr = np.ascontiguousarray(arr).copy()
            arr.flags.writeable = False
            frozen.append(arr)
        object.__setattr__(self, "levels", tuple(frozen))

    def shapes(self) -> tuple[tuple[int, int, int], ...]:
        return tuple(level.shape for level in self.levels)


def l1_loss(generated: ImageBuffer, reference: ImageBuffer) -> float:
    """Mean absolute pixel difference."""
    if generated.data.shape != reference.data.shape:
        raise InputValidationError(
            f"shape mismatch: {generated.data.shape} vs {reference.data.shape}")
    return float(np.abs(generated.data - reference.data).mean())


def perceptual_loss(generated: FeatureStack, reference: FeatureStack) -> float:
    """Sum over levels of the mean absolute feature difference."""
    if generated.shapes() != reference.shapes():
        raise InputValidationError(
            f"feature shapes mismatch: {generated.shapes()} vs {reference.shapes()}")
    total = 0.0
    for g, r in zip(generated.levels, reference.levels):
        total += float(np.abs(g - r).mean())
    return total


def combined_loss(pixel: float, perceptual: float, weights: LossWeights = LossWeights()) -> float:
    """alpha_l * pixel + alpha_p * perceptual."""
    for name, value in (("pixel", pixel), ("perceptual", perceptual)):
        if not np.isfinite(value):
            raise NumericalError(f"{name} loss is non-finite: {value}")
    total = weights.alpha_l * pixel + weights.alpha_p * perceptual
    if not np.isfinite(total):
        raise NumericalError(f"combined loss overflowed: {total}")
    return total


def _orthogonal_kernels(rng: np.random.Generator, c_in: int, c_out: int) -> np.ndarray:
    # orthonormal rows over the flattened receptive field; signs pinned so
    # the bank only depends on the seed, not on the QR implementation's
    # sign convention
    fan_in = c_in * _BANK_KERNEL * _BANK_KERNEL
    if c_out > fan_in:
        raise InputValidationError(f"cannot draw {c_out} orthogonal kernels from fan-in {fan_in}")
    a = rng.standard_normal((fan_in, c_out))
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs[None, :]
    return np.ascontiguousarray(q.T.reshape(c_out, c_in, _BANK_KERNEL, _BANK_KERNEL))


def _conv_stride2(arr: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    # arr (H, W, C) zero-padded by 1, windows strided by 2, giving
    # (ceil(H/2), ceil(W/2)) output dims
    padded = np.pad(arr, ((1, 1), (1, 1), (0, 0)))
    windows = sliding_window_view(padded, (_BANK_KERNEL, _BANK_KERNEL), axis=(0, 1))[::2, ::2]
    return np.einsum("hwcij,ocij->hwo", windows, kernels)


def builtin_feature_bank(seed: int = DEFAULT_BANK_SEED) -> tuple[np.ndarray, ...]:
    """Kernel bank of the built-in extractor: three stride-2 levels with
    orthonormal 3x3 kernels, fully determined by the seed."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=(int(seed),))))
    kernels = []
    c_in = 3
    for c_out in _BANK_CHANNELS:
        kernels.append(_orthogonal_kernels(rng, c_in, c_out))
        c_in = c_out
    return tuple(kernels)


def builtin_feature_stack(image: ImageBuffer, seed: int = DEFAULT_BANK_SEED) -> FeatureStack:
    """Run the built-in extractor on a 3-channel image.

    Each level is a stride-2 valid-after-padding convolution followed by an
    absolute-value nonlinearity; spatial dims halve (rounding up) per level.
    The same seed always yields the same features for the same image.
    """
    if image.channels != 3:
        raise InputValidationError(f"built-in extractor expects 3 channels, got {image.channels}")
    levels = []
    arr = image.data
    for kernels in builtin_feature_bank(seed):
        arr = np.abs(_conv_stride2(arr, kernels))
        levels.append(np.moveaxis(arr, 2, 0))
    return FeatureStack(tuple(levels))
