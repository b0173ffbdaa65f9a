"""End-to-end prior generation for one few-shot episode.

Per feature level and support shot the stages run in a fixed order::

    project -> mask support -> pool (support, optionally query)
            -> L2-normalize -> multi-patch correlation
            -> NSM reweighting or max -> min-max normalize

Normalized channels are averaged over shots and concatenated level-major,
patch-minor into a :class:`PriorStack`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import nsm as nsm_ops
from .errors import DimensionError, ParameterError, PriorMaskError
from .matching import (
    DEFAULT_MINMAX_EPS,
    IMPLS,
    PatchSet,
    PriorChannel,
    channel_from_vector,
    elementwise_corr,
    max_reduce,
    normalize_minmax,
    stack_patches,
)
from .tensor import (
    BinaryMask,
    FeatureMap,
    ProjectionWeights,
    avg_pool_2x2,
    hadamard_mask,
    l2_normalize_channels,
    project_channels,
)

LEVELS = ("middle", "high")


class EmptySupportWarning(UserWarning):
    """Every support mask in the episode is empty; the prior is all zeros."""


class StageError(DimensionError):
    def __init__(self, stage: str, detail):
        super().__init__(f"[{stage}] {detail}")
        self.stage = stage


@dataclass(frozen=True, eq=False)
class SupportShot:
    features: Mapping[str, FeatureMap]
    mask: BinaryMask


@dataclass(frozen=True, eq=False)
class Episode:
    query: Mapping[str, FeatureMap]
    supports: Sequence[SupportShot]

    def __post_init__(self):
        if len(self.supports) < 1:
            raise ParameterError("an episode needs at least one support shot")
        for level in self.query:
            shapes = {shot.features[level].shape for shot in self.supports if level in shot.features}
            if len(shapes) > 1:
                raise DimensionError(f"support shots disagree on {level} shape: {sorted(shapes)}")

    @property
    def shots(self) -> int:
        return len(self.supports)


@dataclass(frozen=True)
class PipelineConfig:
    patches: PatchSet = field(default_factory=lambda: PatchSet((1, 3, 5)))
    levels: tuple[str, ...] = LEVELS
    use_nsm: bool = True
    project_to: int | None = 256
    pool_support: bool = True
    pool_query: bool = False
    epsilon: float = DEFAULT_MINMAX_EPS
    hidden: int = 256
    impl: str = "optimized"

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ParameterError("at least one feature level is required")
        bad = [lv for lv in levels if lv not in LEVELS]
        if bad or len(set(levels)) != len(levels):
            raise ParameterError(f"levels must be distinct members of {LEVELS}, got {levels}")
        if self.project_to is not None and self.project_to < 1:
            raise ParameterError(f"project_to must be >= 1, got {self.project_to}")
        if self.impl not in IMPLS:
            raise ParameterError(f"unknown kernel {self.impl!r}")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def baseline(cls, epsilon: float = DEFAULT_MINMAX_EPS) -> "PipelineConfig":
        """Single-level, single-patch, max-path configuration."""
        return cls(
            patches=PatchSet((1,)),
            levels=("high",),
            use_nsm=False,
            project_to=None,
            pool_support=False,
            pool_query=False,
            epsilon=epsilon,
        )

    @property
    def channel_labels(self) -> list[tuple[str, int]]:
        return [(level, m) for level in self.levels for m in self.patches]


@dataclass(frozen=True, eq=False)
class PriorStack:
    data: np.ndarray  # (h_q, w_q, channels), values in [0, 1]
    labels: tuple[tuple[str, int], ...] = ()

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def channel(self, k: int) -> PriorChannel:
        return PriorChannel(self.data[:, :, k])


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except PriorMaskError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc


def prepare_pair(
    query: FeatureMap,
    support: FeatureMap,
    mask: BinaryMask,
    config: PipelineConfig,
    projection: ProjectionWeights | None = None,
) -> tuple[FeatureMap, FeatureMap]:
    """Projected, masked, pooled and L2-normalized (query, support) for one shot."""
    if projection is not None:
        query = _stage("project", project_channels, query, projection)
        support = _stage("project", project_channels, support, projection)
    support = _stage("mask", hadamard_mask, support, mask)
    if config.pool_support:
        support = _stage("pool-support", avg_pool_2x2, support)
    if config.pool_query:
        query = _stage("pool-query", avg_pool_2x2, query)
    return l2_normalize_channels(query), l2_normalize_channels(support)


def _projection_for(level, config, projections):
    if config.project_to is None:
        return None
    proj = (projections or {}).get(level)
    if proj is None:
        raise StageError("project", f"no projection weights for level {level!r}")
    if proj.out_channels != config.project_to:
        raise StageError(
            "project",
            f"{level} projection outputs {proj.out_channels} channels, config asks for {config.project_to}",
        )
    return proj


def _shot_channels(query, support, config, level, weights) -> list[PriorChannel]:
    volume = _stage("match", stack_patches, query, support, config.patches, config.impl)
    if not config.use_nsm:
        raw = max_reduce(volume)
    else:
        raw = []
        for k, m in enumerate(config.patches):
            w = (weights or {}).get((level, m))
            if w is None:
                raise StageError("nsm", f"no NSM weights for level {level!r}, patch {m}")
            values = _stage("nsm", nsm_ops.suppress, volume.slice(k), w)
            raw.append(channel_from_vector(values, volume.geometry))
    return [normalize_minmax(c, config.epsilon) for c in raw]


def _average_shots(per_shot: list[list[PriorChannel]]) -> list[np.ndarray]:
    n = len(per_shot)
    out = []
    for k in range(len(per_shot[0])):
        acc = np.zeros(per_shot[0][k].data.shape, np.float64)
        for shot in per_shot:
            acc += shot[k].data
        out.append((acc / n).astype(np.float32))
    return out


def _warn_if_empty(episode: Episode) -> None:
    if all(not shot.mask.data.any() for shot in episode.supports):
        warnings.warn(
            "all support masks are empty; the prior stack is all zeros",
            EmptySupportWarning,
            stacklevel=3,
        )


def generate_prior(
    episode: Episode,
    config: PipelineConfig,
    weights: Mapping[tuple[str, int], nsm_ops.NsmWeights] | None = None,
    projections: Mapping[str, ProjectionWeights] | None = None,
) -> PriorStack:
    _warn_if_empty(episode)
    channels = []
    for level in config.levels:
        if level not in episode.query:
            raise StageError("input", f"episode has no {level!r} query features")
        proj = _projection_for(level, config, projections)
        per_shot = []
        for i, shot in enumerate(episode.supports):
            if level not in shot.features:
                raise StageError("input", f"support shot {i} has no {level!r} features")
            q, s = prepare_pair(episode.query[level], shot.features[level], shot.mask, config, proj)
            per_shot.append(_shot_channels(q, s, config, level, weights))
        channels.extend(_average_shots(per_shot))
    return PriorStack(np.stack(channels, axis=-1), tuple(config.channel_labels))


def baseline_prior(episode: Episode, epsilon: float = DEFAULT_MINMAX_EPS) -> PriorStack:
    """Single-position matching prior: cosine similarity, max over support, min-max."""
    if len(episode.query) != 1:
        raise StageError("input", f"baseline prior takes one feature level, got {sorted(episode.query)}")
    (level,) = episode.query
    _warn_if_empty(episode)
    config = PipelineConfig.baseline(epsilon)
    per_shot = []
    for shot in episode.supports:
        q, s = prepare_pair(episode.query[level], shot.features[level], shot.mask, config)
        volume = _stage("match", elementwise_corr, q, s)
        per_shot.append([normalize_minmax(c, epsilon) for c in max_reduce(volume)])
    return PriorStack(np.stack(_average_shots(per_shot), axis=-1), ((level, 1),))
