"""Record naming inside weight files.

NSM weights for a (level, patch) pair live under ``nsm/<level>/m<patch>/{w1,b1,w2,b2}``;
channel projections under ``proj/<level>/{matrix,bias}``; the support grid the
NSM weights were sized for under ``meta/support_hw`` as ``[h_s, w_s]``.
Feature bundles (multi-level query or support files) use the level name as
the record name.
"""
from __future__ import annotations

import re

import numpy as np

from . import io
from .errors import FormatError
from .nsm import NsmWeights, derive_seed, init_weights, uniform_symmetric
from .tensor import FeatureMap, ProjectionWeights

_NSM_RE = re.compile(r"^nsm/(\w+)/m(\d+)/(w1|b1|w2|b2)$")
_PROJ_RE = re.compile(r"^proj/(\w+)/(matrix|bias)$")


def nsm_prefix(level: str, m: int) -> str:
    return f"nsm/{level}/m{m}"


def nsm_records(level: str, m: int, weights: NsmWeights) -> dict[str, np.ndarray]:
    prefix = nsm_prefix(level, m)
    return {f"{prefix}/{k}": getattr(weights, k) for k in ("w1", "b1", "w2", "b2")}


def projection_records(level: str, proj: ProjectionWeights) -> dict[str, np.ndarray]:
    return {f"proj/{level}/matrix": proj.matrix, f"proj/{level}/bias": proj.bias}


def parse_records(records: dict[str, np.ndarray]):
    """Split raw records into ``({(level, m): NsmWeights}, {level: ProjectionWeights})``."""
    nsm_parts: dict[tuple[str, int], dict] = {}
    proj_parts: dict[str, dict] = {}
    for name, array in records.items():
        if match := _NSM_RE.match(name):
            level, m, key = match.group(1), int(match.group(2)), match.group(3)
            nsm_parts.setdefault((level, m), {})[key] = array
        elif match := _PROJ_RE.match(name):
            proj_parts.setdefault(match.group(1), {})[match.group(2)] = array
    nsm = {}
    for key, parts in nsm_parts.items():
        if set(parts) != {"w1", "b1", "w2", "b2"}:
            raise FormatError(f"incomplete NSM record set for {key}: {sorted(parts)}")
        nsm[key] = NsmWeights(**parts)
    projections = {}
    for level, parts in proj_parts.items():
        if set(parts) != {"matrix", "bias"}:
            raise FormatError(f"incomplete projection records for {level}: {sorted(parts)}")
        projections[level] = ProjectionWeights(parts["matrix"], parts["bias"])
    return nsm, projections


def init_projection(in_channels: int, out_channels: int, seed: int) -> ProjectionWeights:
    bound = 1.0 / np.sqrt(in_channels)
    matrix = uniform_symmetric(seed, (in_channels, out_channels), bound)
    return ProjectionWeights(matrix, np.zeros(out_channels, np.float32))


def init_bundle(
    support_hw: tuple[int, int],
    hidden: int,
    seed: int,
    patches,
    levels,
    in_channels: dict[str, int] | None = None,
    project_to: int = 256,
) -> dict[str, np.ndarray]:
    """Fresh records: one NSM set per (level, patch) and optional projections."""
    hs, ws = support_hw
    records: dict[str, np.ndarray] = {"meta/support_hw": np.array([hs, ws], np.float32)}
    index = 0
    for level in levels:
        for m in patches:
            w = init_weights(hs * ws, hidden, derive_seed(seed, index))
            records.update(nsm_records(level, m, w))
            index += 1
    for level in levels:
        if in_channels and level in in_channels:
            proj = init_projection(in_channels[level], project_to, derive_seed(seed, index))
            records.update(projection_records(level, proj))
        index += 1
    return records


def load_features(path, levels) -> dict[str, FeatureMap]:
    """Features per level from a rank-3 tensor file (single level) or a bundle."""
    kind = io.file_kind(path)
    if kind == io.TENSOR_MAGIC:
        if len(levels) != 1:
            raise FormatError(
                f"{path} holds a single tensor but levels {list(levels)} were requested; use a bundle"
            )
        return {levels[0]: FeatureMap(io.load_tensor(path))}
    records = io.load_weights(path)
    missing = [lv for lv in levels if lv not in records]
    if missing:
        raise FormatError(f"{path} has no records for levels {missing}")
    return {lv: FeatureMap(records[lv]) for lv in levels}
