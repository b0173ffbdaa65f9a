"""Compiled correlation kernels.

Accumulation order is shared by every kernel here so results agree bitwise:

* a dot product runs over channels in order, in float64, and is rounded to
  float32 once;
* a window sum adds those float32 dot products in row-major offset order
  (dy outer, dx inner) in float64, skipping padded offsets, then multiplies by
  ``1 / m**2`` and rounds to float32.
"""
import numba
import numpy as np

# the default priority probes TBB first and warns on old system versions
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@numba.njit(cache=True)
def _dot(a, b):
    acc = 0.0
    for c in range(a.shape[0]):
        acc += np.float64(a[c]) * np.float64(b[c])
    return np.float32(acc)


@numba.njit(cache=True)
def naive_patch_corr(query, support, m):
    """Direct evaluation: every window term recomputes its dot product."""
    hq, wq, _ = query.shape
    hs, ws, _ = support.shape
    r = (m - 1) // 2
    inv = 1.0 / (m * m)
    out = np.empty((hq * wq, hs * ws), np.float32)
    for qy in range(hq):
        for qx in range(wq):
            for sy in range(hs):
                for sx in range(ws):
                    acc = 0.0
                    for dy in range(-r, r + 1):
                        ay = qy + dy
                        by = sy + dy
                        if ay < 0 or ay >= hq or by < 0 or by >= hs:
                            continue
                        for dx in range(-r, r + 1):
                            ax = qx + dx
                            bx = sx + dx
                            if ax < 0 or ax >= wq or bx < 0 or bx >= ws:
                                continue
                            acc += np.float64(_dot(query[ay, ax], support[by, bx]))
                    out[qy * wq + qx, sy * ws + sx] = np.float32(acc * inv)
    return out


@numba.njit(cache=True, parallel=True)
def pairwise_dots(query, support):
    """(hq*wq, hs*ws) table of position-to-position dot products."""
    hq, wq, d = query.shape
    hs, ws, _ = support.shape
    nq = hq * wq
    ns = hs * ws
    out = np.empty((nq, ns), np.float32)
    for i in numba.prange(nq):
        qy = i // wq
        qx = i - qy * wq
        for j in range(ns):
            sy = j // ws
            sx = j - sy * ws
            out[i, j] = _dot(query[qy, qx], support[sy, sx])
    return out


@numba.njit(cache=True, parallel=True)
def window_sum(dots, hq, wq, hs, ws, m):
    """Sum ``dots`` along shifted diagonals over an m x m window of offsets."""
    r = (m - 1) // 2
    inv = 1.0 / (m * m)
    nq = hq * wq
    ns = hs * ws
    out = np.empty((nq, ns), np.float32)
    for i in numba.prange(nq):
        qy = i // wq
        qx = i - qy * wq
        for j in range(ns):
            sy = j // ws
            sx = j - sy * ws
            acc = 0.0
            for dy in range(-r, r + 1):
                ay = qy + dy
                by = sy + dy
                if ay < 0 or ay >= hq or by < 0 or by >= hs:
                    continue
                for dx in range(-r, r + 1):
                    ax = qx + dx
                    bx = sx + dx
                    if ax < 0 or ax >= wq or bx < 0 or bx >= ws:
                        continue
                    acc += np.float64(dots[ay * wq + ax, by * ws + bx])
            out[i, j] = np.float32(acc * inv)
    return out


def set_threads(n):
    numba.set_num_threads(n)


def get_threads():
    return numba.get_num_threads()
