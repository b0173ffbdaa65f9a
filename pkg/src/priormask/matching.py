"""Correlation volumes between query and support feature maps.

Position-level cosine similarity, regional (patch-window) similarity over
several odd window sizes, the per-query max over support positions, and
min-max rescaling of the resulting prior channels.

Two kernels build patch correlations. ``"naive"`` evaluates every window term
directly. ``"optimized"`` computes the position-to-position similarity table
once and sums it along shifted diagonals, which is shared across all window
sizes. Both accumulate in the same order and agree bitwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import DimensionError, ParameterError
from .tensor import FeatureMap

IMPLS = ("optimized", "naive")
DEFAULT_MINMAX_EPS = 1e-7


@dataclass(frozen=True)
class PatchSet:
    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes:
            raise ParameterError("patch set is empty")
        for s in sizes:
            _check_patch_size(s)
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ParameterError(f"patch sizes must be strictly increasing, got {list(sizes)}")
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def parse(cls, text: str) -> "PatchSet":
        try:
            return cls(tuple(int(t) for t in text.split(",") if t.strip()))
        except ValueError:
            raise ParameterError(f"cannot parse patch list {text!r}") from None

    def __len__(self):
        return len(self.sizes)

    def __iter__(self):
        return iter(self.sizes)


@dataclass(frozen=True, eq=False)
class CorrVolume:
    """Similarities of shape (h_q*w_q, h_s*w_s, n_patches)."""

    data: np.ndarray
    geometry: tuple[int, int, int, int]

    def __post_init__(self):
        hq, wq, hs, ws = self.geometry
        if self.data.ndim != 3 or self.data.shape[:2] != (hq * wq, hs * ws):
            raise DimensionError(
                f"volume shape {self.data.shape} does not match geometry {self.geometry}"
            )
        self.data.setflags(write=False)

    @property
    def q_positions(self) -> int:
        return self.data.shape[0]

    @property
    def s_positions(self) -> int:
        return self.data.shape[1]

    @property
    def n_patches(self) -> int:
        return self.data.shape[2]

    def slice(self, k: int) -> np.ndarray:
        return self.data[:, :, k]


@dataclass(frozen=True, eq=False)
class PriorChannel:
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, copy=True)
        if data.ndim != 2:
            raise DimensionError(f"prior channel must be 2-D, got {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def _check_patch_size(m: int) -> None:
    if m < 1 or m % 2 == 0:
        raise ParameterError(f"patch size must be an odd integer >= 1, got {m}")


def _check_pair(query: FeatureMap, support: FeatureMap) -> None:
    if query.channels != support.channels:
        raise DimensionError(
            f"query has {query.channels} channels, support has {support.channels}"
        )


def _check_impl(impl: str) -> None:
    if impl not in IMPLS:
        raise ParameterError(f"unknown kernel {impl!r}, expected one of {IMPLS}")


def _check_fits(query: FeatureMap, support: FeatureMap, m: int) -> None:
    limit = 2 * min(query.height, query.width, support.height, support.width) - 1
    if m > limit:
        raise ParameterError(f"patch size {m} exceeds {limit} for these feature maps")


def _geometry(query: FeatureMap, support: FeatureMap) -> tuple[int, int, int, int]:
    return (query.height, query.width, support.height, support.width)


def elementwise_corr(query: FeatureMap, support: FeatureMap) -> CorrVolume:
    """Position-to-position dot products (cosine similarity for unit vectors)."""
    _check_pair(query, support)
    dots = _kernels.pairwise_dots(query.data, support.data)
    return CorrVolume(dots[:, :, None], _geometry(query, support))


def _patch_matrix(query, support, m, impl, dots=None):
    if impl == "naive":
        return _kernels.naive_patch_corr(query.data, support.data, m)
    if dots is None:
        dots = _kernels.pairwise_dots(query.data, support.data)
    if m == 1:
        return dots
    return _kernels.window_sum(dots, *_geometry(query, support), m)


def patch_corr(query: FeatureMap, support: FeatureMap, m: int, impl: str = "optimized") -> CorrVolume:
    """Mean of aligned dot products over an m x m window, zero-padded at borders."""
    _check_patch_size(m)
    _check_impl(impl)
    _check_pair(query, support)
    _check_fits(query, support, m)
    out = _patch_matrix(query, support, m, impl)
    return CorrVolume(out[:, :, None], _geometry(query, support))


def stack_patches(
    query: FeatureMap, support: FeatureMap, patches: PatchSet, impl: str = "optimized"
) -> CorrVolume:
    _check_impl(impl)
    _check_pair(query, support)
    for m in patches:
        _check_fits(query, support, m)
    dots = None
    if impl == "optimized":
        dots = _kernels.pairwise_dots(query.data, support.data)
    slices = [_patch_matrix(query, support, m, impl, dots) for m in patches]
    return CorrVolume(np.stack(slices, axis=-1), _geometry(query, support))


def max_reduce(volume: CorrVolume) -> list[PriorChannel]:
    """Per patch slice, the maximum similarity of each query position."""
    hq, wq = volume.geometry[:2]
    peak = volume.data.max(axis=1)
    return [PriorChannel(peak[:, k].reshape(hq, wq)) for k in range(volume.n_patches)]


def normalize_minmax(channel: PriorChannel, epsilon: float = DEFAULT_MINMAX_EPS) -> PriorChannel:
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    x = channel.data.astype(np.float64)
    lo, hi = x.min(), x.max()
    return PriorChannel((x - lo) / (hi - lo + epsilon))


def channel_from_vector(values: np.ndarray, geometry: Sequence[int]) -> PriorChannel:
    """Reshape a per-query-position vector onto the query grid."""
    return PriorChannel(np.asarray(values).reshape(geometry[0], geometry[1]))
