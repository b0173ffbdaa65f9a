"""Feature-map containers and the elementwise operations on them.

All maps are stored row-major as ``(height, width, channels)`` float32 arrays
with channels fastest-varying, so every spatial position is a contiguous
d-vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError, ParameterError

DEFAULT_NORM_EPS = 1e-12


def _frozen(array, dtype=np.float32) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class FeatureMap:
    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise DimensionError(f"feature map must be (h, w, c) with positive dims, got {data.shape}")
        if not np.isfinite(data).all():
            raise NumericError("feature map contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class BinaryMask:
    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2 or min(data.shape) < 1:
            raise DimensionError(f"mask must be (h, w) with positive dims, got {data.shape}")
        if not np.isin(data, (0.0, 1.0)).all():
            raise ParameterError("mask values must be exactly 0.0 or 1.0")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class ProjectionWeights:
    """Per-position linear channel map (a 1x1 convolution)."""

    matrix: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        matrix = _frozen(self.matrix)
        bias = _frozen(self.bias)
        if matrix.ndim != 2 or bias.shape != (matrix.shape[1],):
            raise DimensionError(
                f"projection matrix {matrix.shape} and bias {bias.shape} are inconsistent"
            )
        if not (np.isfinite(matrix).all() and np.isfinite(bias).all()):
            raise NumericError("projection weights contain non-finite values")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "bias", bias)

    @property
    def in_channels(self) -> int:
        return self.matrix.shape[0]

    @property
    def out_channels(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def identity(cls, channels: int) -> "ProjectionWeights":
        return cls(np.eye(channels, dtype=np.float32), np.zeros(channels, np.float32))


def hadamard_mask(features: FeatureMap, mask: BinaryMask) -> FeatureMap:
    if features.shape[:2] != mask.data.shape:
        raise DimensionError(
            f"features {features.shape[:2]} and mask {mask.data.shape} differ spatially"
        )
    return FeatureMap(features.data * mask.data[:, :, None])


def l2_normalize_channels(features: FeatureMap, epsilon: float = DEFAULT_NORM_EPS) -> FeatureMap:
    """Scale every position vector to unit length.

    Vectors with norm below ``epsilon`` (in particular masked-out zero vectors)
    map to zero, so every output norm is either 0 or 1.
    """
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    x = features.data.astype(np.float64)
    norm = np.sqrt(np.einsum("hwc,hwc->hw", x, x))
    scale = np.where(norm >= epsilon, 1.0 / np.maximum(norm, epsilon), 0.0)
    return FeatureMap(x * scale[:, :, None])


def avg_pool_2x2(features: FeatureMap) -> FeatureMap:
    """2x2 mean pooling with stride 2; an odd trailing row/column is dropped."""
    h, w, c = features.shape
    if h < 2 or w < 2:
        raise DimensionError(f"2x2 pooling needs at least 2x2 input, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    blocks = features.data[: 2 * h2, : 2 * w2].astype(np.float64).reshape(h2, 2, w2, 2, c)
    return FeatureMap(blocks.mean(axis=(1, 3)))


def project_channels(features: FeatureMap, weights: ProjectionWeights) -> FeatureMap:
    if features.channels != weights.in_channels:
        raise DimensionError(
            f"features have {features.channels} channels, projection expects {weights.in_channels}"
        )
    out = features.data @ weights.matrix + weights.bias
    return FeatureMap(out)
