"""Eigenvalue switch detection and loading-path smoothing.

Per-time PCA output is only identified up to column sign, and when two
adjacent eigenvalue curves cross the estimated eigenvectors switch order.
This module detects such coalescing regions from left/right one-sided
estimates, repairs sign flips and order switches, interpolates through the
regions with smoothing splines, re-orthonormalizes, and applies a global
varimax rotation for interpretability.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_smoothing_spline

from .estimation import (
    COLUMN,
    ROW,
    LoadingPath,
    MatrixSeries,
    scatter_path,
)
from .kernels import LEFT, RIGHT, KernelSpec


@dataclass(frozen=True)
class CoalescingRegion:
    """Time interval (a, b] where columns kappa and kappa+1 coalesce."""

    a: int
    b: int
    kappa: int

    def __post_init__(self):
        if not 0 <= self.a < self.b:
            raise ValueError("region requires 0 <= a < b")
        if self.kappa < 1:
            raise ValueError("kappa is a 1-based column index")

    def contains(self, t: int) -> bool:
        return self.a < t <= self.b


@dataclass
class SwitchDiagnostics:
    """Switch statistics, thresholds, and detected coalescing regions.

    ``stats`` is (d-1, T) with NaN marking times where a one-sided window
    is incomplete.  ``upper_q95`` is the 0.95 quantile of each statistic
    row, emitted as a plot reference; thresholding uses ``thresholds``.
    """

    stats: np.ndarray
    thresholds: np.ndarray
    regions: list[CoalescingRegion] = field(default_factory=list)
    upper_q95: np.ndarray | None = None


def switch_statistic(R_left: np.ndarray, R_right: np.ndarray, i: int) -> float:
    """Order-switch statistic for adjacent columns i, i+1 (1-based).

    Computed from projector differences of the single columns minus the
    projector difference of the column pair; for orthonormal inputs it
    equals 2[(l_i' r_{i+1})^2 + (l_{i+1}' r_i)^2] and lies in [0, 4].
    """
    R_left = np.asarray(R_left, dtype=float)
    R_right = np.asarray(R_right, dtype=float)
    d = R_left.shape[1]
    if not 1 <= i <= d - 1:
        raise ValueError(f"i must lie in [1, {d - 1}], got {i}")

    def proj_dist_sq(A, B):
        # ||AA' - BB'||_F^2 via Gram matrices; exact, no n x n products
        return (np.sum((A.T @ A) ** 2) + np.sum((B.T @ B) ** 2)
                - 2.0 * np.sum((A.T @ B) ** 2))

    li = R_left[:, i - 1:i]
    lj = R_left[:, i:i + 1]
    ri = R_right[:, i - 1:i]
    rj = R_right[:, i:i + 1]
    pair_l = R_left[:, i - 1:i + 1]
    pair_r = R_right[:, i - 1:i + 1]
    return float(proj_dist_sq(li, ri) + proj_dist_sq(lj, rj)
                 - proj_dist_sq(pair_l, pair_r))


def switch_statistic_swapform(R_left: np.ndarray, R_right: np.ndarray,
                              i: int) -> float:
    """Swapped-inner-product form, valid for exactly orthonormal columns."""
    a = float(R_left[:, i - 1] @ R_right[:, i])
    b = float(R_left[:, i] @ R_right[:, i - 1])
    return 2.0 * (a * a + b * b)


def _runs_above(x: np.ndarray, thr: float) -> list[tuple[int, int]]:
    """Maximal 1-based runs [start, end] where x > thr (NaN never exceeds)."""
    above = np.zeros(len(x), dtype=bool)
    valid = ~np.isnan(x)
    above[valid] = x[valid] > thr
    runs = []
    start = None
    for t, flag in enumerate(above, start=1):
        if flag and start is None:
            start = t
        elif not flag and start is not None:
            runs.append((start, t - 1))
            start = None
    if start is not None:
        runs.append((start, len(x)))
    return runs


def switch_statistics_path(series: MatrixSeries, spec_star: KernelSpec,
                           d: int, side: str = ROW) -> np.ndarray:
    """T_{i,t} for i in [1, d-1] and all t; NaN where windows are incomplete."""
    T = series.T
    stats = np.full((max(d - 1, 0), T), np.nan)
    if d < 2:
        return stats
    M_minus = scatter_path(series, spec_star.with_side(LEFT), side)
    M_plus = scatter_path(series, spec_star.with_side(RIGHT), side)
    for t in range(T):
        if np.isnan(M_minus[t, 0, 0]) or np.isnan(M_plus[t, 0, 0]):
            continue
        _, vec_m = np.linalg.eigh(M_minus[t])
        _, vec_p = np.linalg.eigh(M_plus[t])
        Rm = vec_m[:, ::-1][:, :d]
        Rp = vec_p[:, ::-1][:, :d]
        for i in range(1, d):
            stats[i - 1, t] = switch_statistic(Rm, Rp, i)
    return stats


def _regions_from_stats(stats: np.ndarray, fence_scale: float = 3.0,
                        merge_gap: int = 0) -> tuple[np.ndarray, np.ndarray,
                                                     list[CoalescingRegion]]:
    finite = stats[np.isfinite(stats)]
    iqr_global = _iqr(finite) if finite.size else 0.0
    thresholds = np.empty(stats.shape[0])
    q95 = np.full(stats.shape[0], np.nan)
    regions: list[CoalescingRegion] = []
    for i in range(stats.shape[0]):
        row = stats[i]
        vals = row[np.isfinite(row)]
        iqr_i = _iqr(vals) if vals.size else 0.0
        q3 = float(np.quantile(vals, 0.75)) if vals.size else 0.0
        thresholds[i] = q3 + fence_scale * max(iqr_i, iqr_global)
        if vals.size:
            q95[i] = float(np.quantile(vals, 0.95))
        runs = _runs_above(row, thresholds[i])
        merged: list[tuple[int, int]] = []
        for start, end in runs:
            if merged and start - merged[-1][1] <= merge_gap:
                merged[-1] = (merged[-1][0], end)
            else:
                merged.append((start, end))
        for start, end in merged:
            regions.append(CoalescingRegion(a=start - 1, b=end, kappa=i + 1))
    regions.sort(key=lambda r: (r.kappa, r.a))
    return thresholds, q95, regions


def _iqr(x: np.ndarray) -> float:
    return float(np.quantile(x, 0.75) - np.quantile(x, 0.25))


def detect_switches(series: MatrixSeries, spec_star: KernelSpec, d: int,
                    side: str = ROW, fence_scale: float = 3.0,
                    merge_gap: int | None = None) -> SwitchDiagnostics:
    """Detect coalescing regions from left/right one-sided eigenvectors.

    Statistics are computed for t where both one-sided windows fit inside
    the sample.  A statistic row flags an outlier when it exceeds the fence
    Q3 + fence_scale * IQR, with the IQR floored by the global IQR over all
    rows.  Exceedance runs separated by at most ``merge_gap`` time points
    are merged into one region: the one-sided windows of nearby times share
    data, so the statistic path is correlated over roughly one window width
    and fragments of one crossing event would otherwise surface as separate
    regions.  ``merge_gap`` defaults to the window width floor(h* T).
    """
    stats = switch_statistics_path(series, spec_star, d, side)
    if d < 2:
        return SwitchDiagnostics(stats=stats,
                                 thresholds=np.empty(0),
                                 regions=[],
                                 upper_q95=np.empty(0))
    if merge_gap is None:
        merge_gap = math.floor(spec_star.bandwidth * series.T)
    thresholds, q95, regions = _regions_from_stats(stats, fence_scale,
                                                   merge_gap)
    return SwitchDiagnostics(stats=stats, thresholds=thresholds,
                             regions=regions, upper_q95=q95)


def mvp_bootstrap_regions(series: MatrixSeries, spec: KernelSpec, d: int,
                          n_boot: int = 100, percentile: float = 5.0,
                          side: str = ROW,
                          rng: np.random.Generator | None = None
                          ) -> list[CoalescingRegion]:
    """Bootstrap-band baseline detector for coalescing regions.

    Resamples the fitted low-rank signal with Gaussian white noise,
    re-estimates the eigenvalue paths, and flags times where the
    percentile bands of adjacent eigenvalues overlap.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    T = series.T
    n_cross = series.q if side == ROW else series.p
    M = scatter_path(series, spec, side)
    vals, vecs = np.linalg.eigh(M)
    vals = np.maximum(vals[:, ::-1][:, :d], 0.0)
    vecs = vecs[:, :, ::-1][:, :, :d]
    root = vecs * np.sqrt(vals)[:, None, :]  # (T, n, d)

    boot_vals = np.empty((n_boot, T, d))
    for b in range(n_boot):
        Z = rng.standard_normal((T, d, n_cross)) / math.sqrt(n_cross)
        Yb = np.einsum("tnd,tdm->tnm", root, Z, optimize=True)
        if side == ROW:
            boot = MatrixSeries(data=Yb)
            Mb = scatter_path(boot, spec, ROW)
        else:
            boot = MatrixSeries(data=np.swapaxes(Yb, 1, 2))
            Mb = scatter_path(boot, spec, COLUMN)
        lam = np.linalg.eigvalsh(Mb)[:, ::-1][:, :d]
        boot_vals[b] = lam

    lo = np.percentile(boot_vals, percentile, axis=0)       # (T, d)
    hi = np.percentile(boot_vals, 100.0 - percentile, axis=0)
    regions: list[CoalescingRegion] = []
    for i in range(d - 1):
        overlap = (hi[:, i + 1] >= lo[:, i]).astype(float)
        for start, end in _runs_above(overlap, 0.5):
            regions.append(CoalescingRegion(a=start - 1, b=end, kappa=i + 1))
    regions.sort(key=lambda r: (r.kappa, r.a))
    return regions


def gram_schmidt(A: np.ndarray) -> np.ndarray:
    """Orthonormalize columns in order (column 1 first)."""
    Q = np.array(A, dtype=float)
    for j in range(Q.shape[1]):
        for l in range(j):
            Q[:, j] -= (Q[:, l] @ Q[:, j]) * Q[:, l]
        nrm = np.linalg.norm(Q[:, j])
        if nrm < 1e-14:
            raise ValueError(f"column {j + 1} is numerically dependent")
        Q[:, j] /= nrm
    return Q


def align_signs(mats: np.ndarray) -> np.ndarray:
    """Flip column signs so each column tracks its predecessor in time."""
    out = np.array(mats, dtype=float)
    for t in range(1, out.shape[0]):
        dots = np.einsum("nd,nd->d", out[t - 1], out[t])
        out[t] *= np.where(dots < 0, -1.0, 1.0)
    return out


def repair_and_smooth(raw: LoadingPath,
                      diag: SwitchDiagnostics) -> LoadingPath:
    """Sign-align, unswitch, interpolate through regions, re-orthonormalize.

    Column swaps accumulate after each region for the same column index;
    entries of the affected columns inside a region are replaced by
    smoothing-spline fits on the outside-region samples.
    """
    T, n, d = raw.T, raw.n, raw.d
    mats = align_signs(raw.mats)

    regions = sorted(diag.regions, key=lambda r: (r.kappa, r.a))
    for r in regions:
        if r.a <= 0 and r.b >= T:
            raise ValueError("coalescing region covers the whole sample; "
                             "the path cannot be repaired")
        if r.kappa >= d:
            raise ValueError(f"region kappa={r.kappa} exceeds d-1={d - 1}")

    # cumulative switch parity: after each region for column i, swap i, i+1;
    # re-swapping the tail at each boundary accumulates the parity
    for i in range(1, d):
        for b in sorted({r.b for r in regions if r.kappa == i}):
            if b < T:
                mats[b:, :, [i - 1, i]] = mats[b:, :, [i, i - 1]]

    # interpolate affected columns inside their regions
    inside = np.zeros((T, d), dtype=bool)
    for r in regions:
        inside[r.a:r.b, r.kappa - 1] = True
        inside[r.a:r.b, r.kappa] = True
    ts = np.arange(1, T + 1, dtype=float)
    for c in range(d):
        mask = inside[:, c]
        if not mask.any():
            continue
        keep = ~mask
        if keep.sum() < 4:
            raise ValueError("too few points outside coalescing regions "
                             f"to interpolate column {c + 1}")
        # re-align kept samples across the gaps so the spline does not
        # chase sign flips introduced by the switch repair
        keep_idx = np.nonzero(keep)[0]
        for prev_t, t in zip(keep_idx[:-1], keep_idx[1:]):
            if mats[prev_t, :, c] @ mats[t, :, c] < 0:
                mats[t, :, c] *= -1.0
        for row in range(n):
            spline = make_smoothing_spline(ts[keep], mats[keep, row, c])
            mats[mask, row, c] = spline(ts[mask])

    scale = math.sqrt(n)
    for t in range(T):
        mats[t] = scale * gram_schmidt(mats[t] / scale)
    return LoadingPath(side=raw.side, mats=mats, eigvals=raw.eigvals.copy(),
                       smoothed=True)


def varimax_criterion(A: np.ndarray) -> float:
    """Sum over columns of the variance of squared entries."""
    sq = np.asarray(A, dtype=float) ** 2
    return float(np.sum(np.var(sq, axis=0)))


def varimax(stacked: np.ndarray, tol: float = 1e-8, max_iter: int = 200
            ) -> tuple[np.ndarray, np.ndarray]:
    """Varimax rotation by pairwise sweeps; returns (rotated, rotation).

    The rotation is orthogonal and the criterion is non-decreasing across
    sweeps; convergence when the per-sweep criterion gain drops below tol.
    """
    A = np.asarray(stacked, dtype=float)
    m, d = A.shape
    if d < 2:
        raise ValueError("varimax requires at least 2 columns")
    if m < d:
        raise ValueError("varimax requires at least d rows")
    B = A.copy()
    G = np.eye(d)
    crit = varimax_criterion(B)
    converged = False
    for _ in range(max_iter):
        for i in range(d - 1):
            for j in range(i + 1, d):
                x, y = B[:, i], B[:, j]
                u = x * x - y * y
                v = 2.0 * x * y
                Au, Bv = u.sum(), v.sum()
                Cd = float(u @ u - v @ v)
                Dd = 2.0 * float(u @ v)
                num = Dd - 2.0 * Au * Bv / m
                den = Cd - (Au * Au - Bv * Bv) / m
                phi = 0.25 * math.atan2(num, den)
                if abs(phi) < 1e-15:
                    continue
                c, s = math.cos(phi), math.sin(phi)
                rot = np.array([[c, -s], [s, c]])
                B[:, [i, j]] = B[:, [i, j]] @ rot
                G[:, [i, j]] = G[:, [i, j]] @ rot
        new_crit = varimax_criterion(B)
        if new_crit - crit < tol:
            crit = max(new_crit, crit)
            converged = True
            break
        crit = new_crit
    if not converged:
        warnings.warn("varimax did not converge within max_iter sweeps; "
                      "returning the best iterate", RuntimeWarning)
    return B, G


def apply_global_rotation(path: LoadingPath,
                          window: tuple[int, int] | None = None) -> LoadingPath:
    """Fit varimax on the stacked loadings of a time window, rotate all t.

    ``window`` is 1-based inclusive (start, end); default is the full span.
    """
    T = path.T
    if window is None:
        window = (1, T)
    start, end = window
    if not (1 <= start <= end <= T):
        raise ValueError(f"window must satisfy 1 <= start <= end <= {T}")
    stacked = path.mats[start - 1:end].reshape(-1, path.d)
    _, G = varimax(stacked)
    mats = np.einsum("tnd,de->tne", path.mats, G)
    return LoadingPath(side=path.side, mats=mats, eigvals=path.eigvals.copy(),
                       smoothed=path.smoothed)
