"""Kernel weights for local estimation of time-varying loading matrices.

Provides the standard second-order kernel densities, boundary-corrected
two-sided weights (normalization adjusted near the sample edges so the
weights integrate to one over the attainable window), one-sided left/right
weights for jump detection, and the rule-of-thumb bandwidth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

TWO_SIDED = "two-sided"
LEFT = "left"
RIGHT = "right"

#: default scale of the rule-of-thumb bandwidth c*(n*T)^(-1/5)
ROT_SCALE = 2.345 / math.sqrt(12.0)


def _epanechnikov(u):
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _uniform(u):
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def _quartic(u):
    w = 1.0 - u * u
    return np.where(np.abs(u) <= 1.0, (15.0 / 16.0) * w * w, 0.0)


_FAMILIES = {
    "epanechnikov": _epanechnikov,
    "uniform": _uniform,
    "quartic": _quartic,
}


def kernel_density(family: str, u):
    """Evaluate the kernel density ``k(u)``; zero outside [-1, 1].

    ``u`` may be a scalar or array.
    """
    try:
        k = _FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown kernel family {family!r}") from None
    out = k(np.asarray(u, dtype=float))
    return float(out) if np.isscalar(u) or np.ndim(u) == 0 else out


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family + bandwidth + side.

    ``bandwidth`` is on the rescaled time axis t/T and must lie in (0, 1].
    ``side`` selects two-sided boundary-corrected weights or the one-sided
    left/right variants used for switch detection.
    """

    family: str = "epanechnikov"
    bandwidth: float = 0.1
    side: str = TWO_SIDED

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (0.0 < self.bandwidth <= 1.0):
            raise ValueError(f"bandwidth must be in (0, 1], got {self.bandwidth}")
        if self.side not in (TWO_SIDED, LEFT, RIGHT):
            raise ValueError(f"unknown side {self.side!r}")

    def with_side(self, side: str) -> "KernelSpec":
        return replace(self, side=side)


@lru_cache(maxsize=4096)
def _boundary_divisor(family: str, lo: float, hi: float) -> float:
    """Integral of k over [lo, hi], adaptive quadrature, abs tol 1e-10."""
    lo = max(lo, -1.0)
    hi = min(hi, 1.0)
    if hi <= lo:
        return 0.0
    val, _ = quad(lambda u: kernel_density(family, u), lo, hi,
                  epsabs=1e-10, limit=200)
    return val


def boundary_weight(spec: KernelSpec, s: int, t: int, T: int) -> float:
    """Boundary-corrected two-sided weight K_{h,st} for 1-based s, t."""
    if spec.side != TWO_SIDED:
        raise ValueError("boundary_weight requires a two-sided spec")
    if not (1 <= s <= T and 1 <= t <= T):
        raise ValueError(f"time indices must lie in [1, {T}]: s={s}, t={t}")
    h = spec.bandwidth
    w = kernel_density(spec.family, (s - t) / (T * h)) / h
    edge = math.floor(T * h)
    if t <= edge:
        w /= _boundary_divisor(spec.family, -t / (T * h), 1.0)
    elif t >= T - edge:
        w /= _boundary_divisor(spec.family, -1.0, (1.0 - t / T) / h)
    return w


def boundary_weights(spec: KernelSpec, t: int, T: int) -> np.ndarray:
    """Vector of K_{h,st} over s = 1..T (index 0 is s=1)."""
    if spec.side != TWO_SIDED:
        raise ValueError("boundary_weights requires a two-sided spec")
    if not 1 <= t <= T:
        raise ValueError(f"time index must lie in [1, {T}]: t={t}")
    h = spec.bandwidth
    s = np.arange(1, T + 1)
    w = kernel_density(spec.family, (s - t) / (T * h)) / h
    edge = math.floor(T * h)
    if t <= edge:
        w = w / _boundary_divisor(spec.family, -t / (T * h), 1.0)
    elif t >= T - edge:
        w = w / _boundary_divisor(spec.family, -1.0, (1.0 - t / T) / h)
    return w


def onesided_window(spec: KernelSpec, t: int, T: int) -> tuple[int, int]:
    """Inclusive 1-based window [lo, hi] for a one-sided spec at time t."""
    half = math.floor(spec.bandwidth * T)
    if spec.side == LEFT:
        lo, hi = t - half, t - 1
    elif spec.side == RIGHT:
        lo, hi = t, t + half
    else:
        raise ValueError("onesided_window requires a left or right spec")
    return lo, hi


def onesided_weight(spec: KernelSpec, s: int, t: int, T: int) -> float:
    """One-sided weight 2/h* * k((s-t)/(T h*)); zero outside the window."""
    lo, hi = onesided_window(spec, t, T)
    if max(lo, 1) > min(hi, T):
        raise ValueError(
            f"degenerate one-sided window at t={t} (side={spec.side}, T={T})")
    if not lo <= s <= hi:
        return 0.0
    h = spec.bandwidth
    return 2.0 * kernel_density(spec.family, (s - t) / (T * h)) / h


def onesided_weights(spec: KernelSpec, t: int, T: int) -> np.ndarray:
    """Vector of one-sided weights over s = 1..T (zero outside the window)."""
    lo, hi = onesided_window(spec, t, T)
    if max(lo, 1) > min(hi, T):
        raise ValueError(
            f"degenerate one-sided window at t={t} (side={spec.side}, T={T})")
    h = spec.bandwidth
    s = np.arange(1, T + 1)
    w = 2.0 * kernel_density(spec.family, (s - t) / (T * h)) / h
    w[(s < lo) | (s > hi)] = 0.0
    return w


def rot_bandwidth(n_cross: int, T: int, scale: float = ROT_SCALE) -> float:
    """Rule-of-thumb bandwidth scale * (n_cross * T)^(-1/5).

    ``n_cross`` is the cross-sectional dimension smoothed over: q when
    estimating row loadings, p when estimating column loadings.
    """
    if n_cross < 1 or T < 1:
        raise ValueError("n_cross and T must be positive")
    return scale * float(n_cross * T) ** (-0.2)
