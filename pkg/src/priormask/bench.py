"""Timing harness for the naive and optimized patch-correlation kernels."""
from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .matching import PatchSet, stack_patches
from .tensor import FeatureMap, l2_normalize_channels

CSV_FIELDS = [
    "impl", "hq", "wq", "hs", "ws", "d", "patches", "iters",
    "median_s", "evals_per_s", "checksum", "threads",
]


@dataclass
class BenchResult:
    impl: str
    median_s: float
    evals_per_s: float
    checksum: float
    times: list


def random_pair(hq, wq, hs, ws, d, seed=0):
    rng = np.random.default_rng(seed)
    q = l2_normalize_channels(FeatureMap(rng.standard_normal((hq, wq, d), dtype=np.float32)))
    s = l2_normalize_channels(FeatureMap(rng.standard_normal((hs, ws, d), dtype=np.float32)))
    return q, s


def similarity_evaluations(hq, wq, hs, ws, patches) -> int:
    """Window-term count: every (query, support, offset) triple, padding included."""
    return hq * wq * hs * ws * sum(m * m for m in patches)


def warm_up() -> None:
    q, s = random_pair(3, 3, 3, 3, 2)
    for impl in ("naive", "optimized"):
        stack_patches(q, s, PatchSet((1, 3)), impl)


def time_impl(q, s, patches, impl, iters):
    times = []
    out = None
    for _ in range(max(iters, 1)):
        t0 = time.perf_counter()
        out = stack_patches(q, s, patches, impl)
        times.append(time.perf_counter() - t0)
    median = statistics.median(times)
    evals = similarity_evaluations(*q.shape[:2], *s.shape[:2], patches)
    checksum = float(np.sum(out.data, dtype=np.float64))
    return BenchResult(impl, median, evals / median, checksum, times), out


def run(hq=60, wq=60, hs=30, ws=30, d=256, patches=(1, 3, 5), iters=3, impls=("naive", "optimized"), seed=0):
    """Time each kernel. With both kernels, outputs must agree before results are trusted.

    Returns ``(results, max_abs_diff)``; ``max_abs_diff`` is None for a single kernel.
    """
    patches = PatchSet(tuple(patches))
    q, s = random_pair(hq, wq, hs, ws, d, seed)
    warm_up()
    results, outputs = [], []
    for impl in impls:
        res, out = time_impl(q, s, patches, impl, iters)
        results.append(res)
        outputs.append(out.data)
    diff = None
    if len(outputs) == 2:
        diff = float(np.max(np.abs(outputs[0] - outputs[1])))
    return results, diff


def to_csv(results, hq, wq, hs, ws, d, patches, iters, threads) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow({
            "impl": r.impl, "hq": hq, "wq": wq, "hs": hs, "ws": ws, "d": d,
            "patches": " ".join(str(m) for m in patches), "iters": len(r.times),
            "median_s": f"{r.median_s:.6f}", "evals_per_s": f"{r.evals_per_s:.6e}",
            "checksum": f"{r.checksum:.9e}", "threads": threads,
        })
    return buf.getvalue()
