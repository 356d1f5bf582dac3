"""Local PCA estimation for matrix time series with time-varying loadings.

The observed series Y_t (p x q) is modeled as R_t F_t C_t' + E_t with
smoothly varying loading matrices.  Loadings are estimated per time point
from kernel-weighted scatter matrices; the latent factor and signal follow
by projection.  The latent dimensions are selected by a time-averaged
eigenvalue-ratio criterion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    LEFT,
    TWO_SIDED,
    KernelSpec,
    _boundary_divisor,
    boundary_weights,
    kernel_density,
    onesided_weights,
)

ROW = "row"
COLUMN = "column"


@dataclass
class MatrixSeries:
    """Ordered sequence of T real p x q matrices, stored as a (T, p, q) array."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3:
            raise ValueError("MatrixSeries requires a (T, p, q) array")
        if self.data.shape[0] < 1:
            raise ValueError("MatrixSeries requires T >= 1")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("MatrixSeries entries must be finite")

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    @property
    def q(self) -> int:
        return self.data.shape[2]

    def __len__(self) -> int:
        return self.T

    def __getitem__(self, t):
        return self.data[t]


@dataclass
class LoadingPath:
    """Time-indexed loading estimates for one side of the model.

    ``mats`` has shape (T, n, d) with columns scaled to sqrt(n) times unit
    eigenvectors for raw per-t PCA output.  ``eigvals`` stores the full
    descending spectrum (T, n) so rank selection and eigenvalue plots do
    not require re-estimation.
    """

    side: str
    mats: np.ndarray
    eigvals: np.ndarray
    smoothed: bool = False

    def __post_init__(self):
        self.mats = np.asarray(self.mats, dtype=float)
        self.eigvals = np.asarray(self.eigvals, dtype=float)
        if self.side not in (ROW, COLUMN):
            raise ValueError(f"side must be {ROW!r} or {COLUMN!r}")
        if self.mats.ndim != 3 or self.eigvals.ndim != 2:
            raise ValueError("mats must be (T, n, d) and eigvals (T, m)")
        if self.mats.shape[0] != self.eigvals.shape[0]:
            raise ValueError("mats and eigvals disagree on T")

    @property
    def T(self) -> int:
        return self.mats.shape[0]

    @property
    def n(self) -> int:
        return self.mats.shape[1]

    @property
    def d(self) -> int:
        return self.mats.shape[2]


@dataclass
class FactorPath:
    """Time-indexed k x r latent factor estimates, shape (T, k, r)."""

    mats: np.ndarray

    def __post_init__(self):
        self.mats = np.asarray(self.mats, dtype=float)
        if self.mats.ndim != 3:
            raise ValueError("FactorPath requires a (T, k, r) array")

    @property
    def T(self) -> int:
        return self.mats.shape[0]


def _weights(spec: KernelSpec, t: int, T: int) -> np.ndarray:
    if spec.side == TWO_SIDED:
        return boundary_weights(spec, t, T)
    return onesided_weights(spec, t, T)


def scatter_matrix(series: MatrixSeries, t: int, spec: KernelSpec,
                   side: str = ROW) -> np.ndarray:
    """Kernel-weighted scatter matrix at 1-based time t.

    Row side: (1/(pqT)) sum_s K_{h,ts} Y_s Y_s'; column side uses Y_s' Y_s.
    One-sided specs use the left/right window weights with the same
    normalization (eigenvectors are scale invariant).
    """
    if side not in (ROW, COLUMN):
        raise ValueError(f"side must be {ROW!r} or {COLUMN!r}")
    T, p, q = series.T, series.p, series.q
    w = _weights(spec, t, T)
    nz = np.nonzero(w)[0]
    Y = series.data[nz]
    if side == ROW:
        M = np.einsum("s,sij,skj->ik", w[nz], Y, Y, optimize=True)
    else:
        M = np.einsum("s,sji,sjk->ik", w[nz], Y, Y, optimize=True)
    M /= p * q * T
    return 0.5 * (M + M.T)


def _windowed_sums(G: np.ndarray, w_rel: np.ndarray, lo_off: int) -> np.ndarray:
    """out[t] = sum_j w_rel[j] * G[t + lo_off + j] with zero padding, all t.

    G is (T, m); offsets index relative to t (0-based).
    """
    T, m = G.shape
    L = len(w_rel)
    pad_lo = max(0, -lo_off)
    pad_hi = max(0, lo_off + L - 1)
    Gp = np.zeros((T + pad_lo + pad_hi, m))
    Gp[pad_lo:pad_lo + T] = G
    win = np.lib.stride_tricks.sliding_window_view(Gp, L, axis=0)
    # window at t starts at padded index t + pad_lo + lo_off
    return win[pad_lo + lo_off:pad_lo + lo_off + T] @ w_rel


def scatter_path(series: MatrixSeries, spec: KernelSpec,
                 side: str = ROW) -> np.ndarray:
    """Scatter matrices for all t, shape (T, n, n).

    For one-sided specs, times whose window sticks out of [1, T] are filled
    with NaN (the statistic is undefined there).
    """
    if side not in (ROW, COLUMN):
        raise ValueError(f"side must be {ROW!r} or {COLUMN!r}")
    T, p, q = series.T, series.p, series.q
    Y = series.data
    if side == ROW:
        G = np.einsum("sij,skj->sik", Y, Y, optimize=True)
    else:
        G = np.einsum("sji,sjk->sik", Y, Y, optimize=True)
    n = G.shape[1]
    Gf = G.reshape(T, n * n)
    h = spec.bandwidth
    half = math.floor(h * T)
    if spec.side == TWO_SIDED:
        j = np.arange(-half, half + 1)
        w_rel = kernel_density(spec.family, j / (T * h)) / h
        out = _windowed_sums(Gf, w_rel, -half)
        # boundary correction: the whole weight vector is divided by the
        # truncated-integral divisor, so the windowed sum rescales directly
        for t in range(1, half + 1):
            out[t - 1] /= _boundary_divisor(spec.family, -t / (T * h), 1.0)
        for t in range(max(T - half, half + 1), T + 1):
            out[t - 1] /= _boundary_divisor(spec.family, -1.0, (1.0 - t / T) / h)
    else:
        if spec.side == LEFT:
            j = np.arange(-half, 0)
        else:
            j = np.arange(0, half + 1)
        w_rel = 2.0 * kernel_density(spec.family, j / (T * h)) / h
        out = _windowed_sums(Gf, w_rel, int(j[0]))
        t0 = np.arange(1, T + 1)
        invalid = (t0 + j[0] < 1) | (t0 + j[-1] > T) | (len(j) == 0)
        out[invalid] = np.nan
    out = out.reshape(T, n, n) / (p * q * T)
    return 0.5 * (out + np.swapaxes(out, 1, 2))


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Make each column's largest-|entry| coordinate positive (ties: lowest index)."""
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _eig_descending(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(M)
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    vals = np.where((vals < 0) & (vals > -1e-10), 0.0, vals)
    return vals, vecs


def local_pca(M: np.ndarray, d: int, scale: float | None = None
              ) -> tuple[np.ndarray, np.ndarray]:
    """Top-d eigenpairs of a symmetric matrix, columns scaled by sqrt(n).

    Returns (loading, eigvals) with eigvals descending and a deterministic
    sign convention (largest-|entry| coordinate positive per column).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    n = M.shape[0]
    if not 1 <= d <= n:
        raise ValueError(f"d must lie in [1, {n}], got {d}")
    tol = 1e-10 * max(1.0, np.abs(M).max())
    if np.abs(M - M.T).max() > tol:
        raise ValueError("M is not symmetric within tolerance")
    if scale is None:
        scale = math.sqrt(n)
    vals, vecs = _eig_descending(0.5 * (M + M.T))
    return scale * _fix_signs(vecs[:, :d]), vals[:d]


def estimate_loadings(series: MatrixSeries, spec_R: KernelSpec,
                      spec_C: KernelSpec, k: int, r: int
                      ) -> tuple[LoadingPath, LoadingPath]:
    """Per-t local PCA loading paths for both sides.

    The full spectrum is recorded in ``eigvals`` for rank selection.
    """
    if not 1 <= k <= series.p:
        raise ValueError(f"k must lie in [1, {series.p}]")
    if not 1 <= r <= series.q:
        raise ValueError(f"r must lie in [1, {series.q}]")
    paths = []
    for side, spec, d in ((ROW, spec_R, k), (COLUMN, spec_C, r)):
        n = series.p if side == ROW else series.q
        Ms = scatter_path(series, spec, side)
        vals, vecs = np.linalg.eigh(Ms)
        vals = vals[:, ::-1]
        vecs = vecs[:, :, ::-1]
        eigvals = np.where((vals < 0) & (vals > -1e-10), 0.0, vals)
        scale = math.sqrt(n)
        mats = np.empty((series.T, n, d))
        for t in range(series.T):
            mats[t] = scale * _fix_signs(vecs[t, :, :d])
        paths.append(LoadingPath(side=side, mats=mats, eigvals=eigvals))
    return paths[0], paths[1]


def estimate_factors(series: MatrixSeries, R_hat: LoadingPath,
                     C_hat: LoadingPath) -> FactorPath:
    """Realized latent factors F_t = (1/(pq)) R_t' Y_t C_t."""
    _check_path_shapes(series, R_hat, C_hat)
    F = np.einsum("tik,tij,tjr->tkr", R_hat.mats, series.data, C_hat.mats,
                  optimize=True) / (series.p * series.q)
    return FactorPath(mats=F)


def estimate_signal(series: MatrixSeries, R_hat: LoadingPath,
                    C_hat: LoadingPath) -> MatrixSeries:
    """Signal estimates S_t = (1/(pq)) R_t R_t' Y_t C_t C_t'."""
    _check_path_shapes(series, R_hat, C_hat)
    F = estimate_factors(series, R_hat, C_hat)
    S = np.einsum("tik,tkr,tjr->tij", R_hat.mats, F.mats, C_hat.mats,
                  optimize=True)
    return MatrixSeries(data=S)


def _check_path_shapes(series, R_hat, C_hat):
    if R_hat.T != series.T or C_hat.T != series.T:
        raise ValueError("loading paths and series disagree on T")
    if R_hat.n != series.p or C_hat.n != series.q:
        raise ValueError("loading path dimensions do not match the series")


def default_k_max(n: int) -> int:
    """Default upper bound for rank search."""
    return max(1, n // 3)


def estimate_rank(eigval_paths: np.ndarray, k_max: int | None = None) -> int:
    """Eigenvalue-ratio rank estimate from a (T, n) array of descending spectra.

    Selects the j in [1, k_max] whose eigenvalue gap dominates the
    time-averaged spectrum: the minimizer of (1/T) sum_t
    lambda_{j+1,t} / lambda_{j,t}.  At any fixed t this picks the same j as
    maximizing lambda_j / lambda_{j,t+1}, but the inverse ratio is bounded
    near the gap, so a handful of times with a nearly vanishing
    lambda_{j+1,t} cannot dominate the time average the way raw ratio
    spikes do.  The numerator is floored at 1e-12 times the average trace,
    which keeps the ratio defined on exactly low-rank input; ties break
    toward the smaller j.
    """
    lam = np.asarray(eigval_paths, dtype=float)
    if lam.ndim != 2 or lam.shape[1] < 2:
        raise ValueError("eigval_paths must be (T, n) with n >= 2")
    n = lam.shape[1]
    if k_max is None:
        k_max = default_k_max(n)
    if not 1 <= k_max <= n - 1:
        raise ValueError(f"k_max must lie in [1, {n - 1}], got {k_max}")
    eps = 1e-12 * float(np.mean(lam.sum(axis=1)))
    eps = max(eps, np.finfo(float).tiny)
    denom = np.maximum(lam[:, :k_max], eps)
    inv_ratios = np.mean(np.maximum(lam[:, 1:k_max + 1], eps) / denom, axis=0)
    return int(np.argmin(inv_ratios)) + 1
