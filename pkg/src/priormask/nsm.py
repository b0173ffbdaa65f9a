"""Noise suppression: reweight support positions before aggregating a correlation slice.

A slice ``corr`` has shape ``(q_positions, s_positions)``. The pipeline is

    r_psi = corr.mean(axis=0)                        # concentrate
    rect  = relu(r_psi @ w1 + b1) @ w2 + b2         # rectify
    prior = corr @ rect                              # noise_filter

``fit_step`` trains the rectifier against a target prior with plain gradient
descent; gradients are computed analytically in float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError, ParameterError

_GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)


@dataclass(frozen=True, eq=False)
class NsmWeights:
    w1: np.ndarray  # (s_positions, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, s_positions)
    b2: np.ndarray  # (s_positions,)

    def __post_init__(self):
        arrays = {}
        for name in ("w1", "b1", "w2", "b2"):
            a = np.array(getattr(self, name), dtype=np.float32, copy=True)
            if not np.isfinite(a).all():
                raise NumericError(f"NSM weight {name} contains non-finite values")
            a.setflags(write=False)
            arrays[name] = a
        s, d = arrays["w1"].shape if arrays["w1"].ndim == 2 else (-1, -1)
        if (
            s < 1
            or arrays["b1"].shape != (d,)
            or arrays["w2"].shape != (d, s)
            or arrays["b2"].shape != (s,)
        ):
            raise DimensionError(
                "inconsistent NSM weight shapes: "
                + ", ".join(f"{k}{v.shape}" for k, v in arrays.items())
            )
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    @property
    def s_positions(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def as_float64(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k).astype(np.float64) for k in ("w1", "b1", "w2", "b2")}


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of the SplitMix64 generator seeded with ``seed``."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed % 2**64) + _GOLDEN_GAMMA * np.arange(1, n + 1, dtype=np.uint64)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def uniform_symmetric(seed: int, shape, bound: float) -> np.ndarray:
    """float32 values in [-bound, bound] from the top 53 bits of SplitMix64 draws."""
    n = int(np.prod(shape))
    u = (splitmix64(seed, n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
    values = ((2.0 * u - 1.0) * bound).astype(np.float32)
    limit = np.float32(bound)
    if limit > bound:
        limit = np.nextafter(limit, np.float32(0))
    return np.clip(values, -limit, limit).reshape(shape)


def derive_seed(seed: int, index: int) -> int:
    """Independent sub-seed for the ``index``-th parameter block."""
    return int(splitmix64(seed, index + 1)[index])


def init_weights(s_positions: int, hidden: int, seed: int) -> NsmWeights:
    if s_positions < 1 or hidden < 1:
        raise ParameterError(f"dimensions must be positive, got {s_positions}, {hidden}")
    w1 = uniform_symmetric(derive_seed(seed, 0), (s_positions, hidden), 1.0 / np.sqrt(s_positions))
    w2 = uniform_symmetric(derive_seed(seed, 1), (hidden, s_positions), 1.0 / np.sqrt(hidden))
    return NsmWeights(w1, np.zeros(hidden), w2, np.zeros(s_positions))


def concentrate(corr: np.ndarray) -> np.ndarray:
    """Column means: how strongly each support position correlates with the query."""
    corr = np.asarray(corr)
    if corr.ndim != 2:
        raise DimensionError(f"correlation slice must be 2-D, got {corr.shape}")
    return corr.astype(np.float64).mean(axis=0).astype(np.float32)


def rectify(r_psi: np.ndarray, weights: NsmWeights) -> np.ndarray:
    r_psi = np.asarray(r_psi, dtype=np.float32)
    if r_psi.shape != (weights.s_positions,):
        raise DimensionError(
            f"rectifier input has shape {r_psi.shape}, weights expect ({weights.s_positions},)"
        )
    hidden = np.maximum(r_psi @ weights.w1 + weights.b1, np.float32(0))
    return hidden @ weights.w2 + weights.b2


def noise_filter(corr: np.ndarray, rectifier: np.ndarray) -> np.ndarray:
    """Weighted sum of each query row over support positions."""
    corr = np.asarray(corr)
    rectifier = np.asarray(rectifier, dtype=np.float32)
    if corr.ndim != 2 or rectifier.shape != (corr.shape[1],):
        raise DimensionError(
            f"slice {corr.shape} and rectifier {rectifier.shape} are incompatible"
        )
    return corr @ rectifier


def suppress(corr: np.ndarray, weights: NsmWeights) -> np.ndarray:
    """Unnormalized noise-filtered prior for one slice."""
    return noise_filter(corr, rectify(concentrate(corr), weights))


def _forward64(corr, params):
    p = corr.mean(axis=0)
    z = p @ params["w1"] + params["b1"]
    h = np.maximum(z, 0.0)
    r = h @ params["w2"] + params["b2"]
    return p, z, h, r, corr @ r


def surrogate_loss(corr: np.ndarray, params: dict, target: np.ndarray) -> float:
    """Mean squared error of the float64 forward pass; ``params`` holds float64 arrays."""
    corr = np.asarray(corr, dtype=np.float64)
    y = _forward64(corr, params)[-1]
    return float(np.mean((y - np.asarray(target, dtype=np.float64).ravel()) ** 2))


def loss_and_grads(corr: np.ndarray, weights: NsmWeights, target: np.ndarray):
    """Surrogate loss and its gradients w.r.t. each weight array, in float64."""
    corr = np.asarray(corr, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64).ravel()
    if corr.ndim != 2 or corr.shape[1] != weights.s_positions or target.shape != (corr.shape[0],):
        raise DimensionError(
            f"slice {corr.shape}, target {target.shape} and weights "
            f"({weights.s_positions} support positions) are inconsistent"
        )
    params = weights.as_float64()
    p, z, h, r, y = _forward64(corr, params)
    resid = y - target
    loss = float(np.mean(resid**2))
    if not np.isfinite(loss):
        raise NumericError(
            f"surrogate loss is {loss}; slice finite={np.isfinite(corr).all()}, "
            f"target finite={np.isfinite(target).all()}"
        )
    dy = 2.0 * resid / resid.size
    dr = corr.T @ dy
    dh = params["w2"] @ dr
    dz = dh * (z > 0)
    grads = {
        "w1": np.outer(p, dz),
        "b1": dz,
        "w2": np.outer(h, dr),
        "b2": dr,
    }
    return loss, grads


def fit_step(corr, weights: NsmWeights, target, learning_rate: float):
    """One gradient-descent step; returns ``(new_weights, loss_before_step)``."""
    if not learning_rate >= 0:
        raise ParameterError(f"learning rate must be non-negative, got {learning_rate}")
    loss, grads = loss_and_grads(corr, weights, target)
    params = weights.as_float64()
    updated = {k: params[k] - learning_rate * grads[k] for k in params}
    return NsmWeights(**updated), loss


def fit(corr, weights: NsmWeights, target, learning_rate: float, steps: int, callback=None):
    """Run ``steps`` descent steps, halving the rate whenever the loss increases.

    A step that increases the loss is rejected. Returns the final weights and the
    list of per-step losses (the loss at the start of each step, then the final
    loss).
    """
    losses = []
    lr = learning_rate
    current = weights
    loss, _ = loss_and_grads(corr, current, target)
    for step in range(steps):
        candidate, _ = fit_step(corr, current, target, lr)
        new_loss, _ = loss_and_grads(corr, candidate, target)
        losses.append(loss)
        if callback is not None:
            callback(step, loss, lr)
        if new_loss > loss:
            lr *= 0.5
        else:
            current, loss = candidate, new_loss
    losses.append(loss)
    return current, losses
