"""Evaluation metrics for simulation studies.

Column-space distances between loading estimates and truth, the
simulation-only rotation alignment matrices, and classification of
detected coalescing regions against known crossing times.
"""

from __future__ import annotations

import math

import numpy as np

from .estimation import COLUMN, ROW, FactorPath, LoadingPath, MatrixSeries
from .kernels import KernelSpec, boundary_weights


def _projector(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    gram = A.T @ A
    d = A.shape[1]
    if np.linalg.matrix_rank(gram) < d:
        raise ValueError("input matrix is rank deficient")
    return A @ np.linalg.solve(gram, A.T)


def space_distance(A_hat: np.ndarray, A: np.ndarray) -> float:
    """Frobenius distance between the column-space projectors of two matrices."""
    return float(np.linalg.norm(_projector(A_hat) - _projector(A), "fro"))


def avg_space_distance(path_hat, path_true) -> float:
    """Mean over t of the per-t column-space distance.

    Accepts (T, n, d) arrays or LoadingPath objects on either side.
    """
    A_hat = path_hat.mats if isinstance(path_hat, LoadingPath) else np.asarray(path_hat)
    A = path_true.mats if isinstance(path_true, LoadingPath) else np.asarray(path_true)
    if A_hat.shape[0] != A.shape[0]:
        raise ValueError("paths disagree on T")
    return float(np.mean([space_distance(A_hat[t], A[t])
                          for t in range(A.shape[0])]))


def rotation_oracle(truth: dict, estimate: LoadingPath, spec: KernelSpec,
                    side: str = ROW) -> np.ndarray:
    """Simulation-only alignment matrices H_t, shape (T, d, d).

    Row side:
        H_t = (1/(Tpq)) sum_s K_{h,ts} F_s C_t' C_t F_s' R_t' Rhat_t V_t^{-1}
    with V_t the diagonal matrix of the top-d eigenvalues; the column side
    swaps the roles of R and C (with matching transposes).
    """
    R, C, F = truth["R"], truth["C"], truth["F"]
    T = F.shape[0]
    p, q = R.shape[1], C.shape[1]
    d = estimate.d
    H = np.empty((T, d, d))
    for t in range(T):
        w = boundary_weights(spec, t + 1, T)
        if side == ROW:
            CtC = C[t].T @ C[t]
            S = np.einsum("s,skr,rl,slm->km", w, F, CtC, F.transpose(0, 2, 1),
                          optimize=True)
            proj = R[t].T @ estimate.mats[t]
        elif side == COLUMN:
            RtR = R[t].T @ R[t]
            S = np.einsum("s,srk,kl,sln->rn", w, F.transpose(0, 2, 1), RtR, F,
                          optimize=True)
            proj = C[t].T @ estimate.mats[t]
        else:
            raise ValueError(f"side must be {ROW!r} or {COLUMN!r}")
        V = estimate.eigvals[t, :d]
        if np.any(V <= 0) or np.min(V) / max(np.max(V), 1e-300) < 1e-14:
            raise ValueError(f"top-d eigenvalue matrix is singular at t={t + 1}")
        H[t] = (S @ proj) / (T * p * q) / V[None, :]
    return H


def alignment_error(truth_path: np.ndarray, estimate: LoadingPath,
                    H: np.ndarray) -> float:
    """Mean over t of ||Rhat_t - R_t H_t||_F^2 / n."""
    n = estimate.n
    res = estimate.mats - np.einsum("tnk,tkd->tnd", truth_path, H)
    return float(np.mean(np.sum(res * res, axis=(1, 2)) / n))


def classify_regions(found, truth_points, T: int) -> tuple[dict[float, int], int]:
    """Count detected regions containing each truth point; the rest are false.

    A region (a, b] is a true positive for a scaled point u when ceil(uT)
    lies in (a, b].  Returns ({point: hits}, false_positive_count).
    """
    hits = {float(u): 0 for u in truth_points}
    false_pos = 0
    for region in found:
        matched = False
        for u in truth_points:
            t_u = math.ceil(u * T)
            if region.a < t_u <= region.b:
                hits[float(u)] += 1
                matched = True
        if not matched:
            false_pos += 1
    return hits, false_pos
