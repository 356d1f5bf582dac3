"""Synthetic data generators for the Monte Carlo studies.

Covers VAR(1) factor and noise processes, two smooth-loading designs
(DGP1 with drifting uniform loadings, DGP2 with logistic second columns),
and a coalescing-eigenvalue design whose eigenvalue curves cross at known
locations, with optional deterministic factor trends (scenarios 1 and 2)
and a controlled signal-to-noise ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .estimation import MatrixSeries

DGP1 = "dgp1"
DGP2 = "dgp2"
COALESCING = "coalescing"

SCENARIOS = ("s0", "s1", "s2")


@dataclass
class ExperimentConfig:
    """Settings for one Monte Carlo experiment."""

    dgp: str = DGP1
    p: int = 20
    q: int = 20
    T: int = 100
    k: int = 2
    r: int = 2
    psi: float = 0.1
    snr_alpha2: float = 19.0
    scenario: str = "s0"
    coalescing_side: str = "row"
    seed: int = 0
    n_reps: int = 1

    def __post_init__(self):
        if self.dgp not in (DGP1, DGP2, COALESCING):
            raise ValueError(f"unknown dgp {self.dgp!r}")
        if not 0.0 <= self.psi < 1.0:
            raise ValueError("psi must lie in [0, 1)")
        if self.k > self.p or self.r > self.q:
            raise ValueError("latent dimensions cannot exceed (p, q)")
        if self.dgp == COALESCING:
            if self.snr_alpha2 <= 0:
                raise ValueError("snr_alpha2 must be positive")
            if self.scenario not in SCENARIOS:
                raise ValueError(f"scenario must be one of {SCENARIOS}")
            if self.coalescing_side not in ("row", "column"):
                raise ValueError("coalescing_side must be 'row' or 'column'")

    def rng(self, rep: int = 0) -> np.random.Generator:
        """Independent generator for replication ``rep`` of this seed."""
        return np.random.default_rng([int(self.seed) & (2**64 - 1), rep])


def gen_var1(dim: int, T: int, phi: float,
             rng: np.random.Generator) -> np.ndarray:
    """Stationary VAR(1) path x_t = phi x_{t-1} + u_t with Var(x_t) = I.

    Returns a (T, dim) array; x_0 is drawn from the stationary law and the
    innovation variance is (1 - phi^2) I.
    """
    if not abs(phi) < 1.0:
        raise ValueError("phi must satisfy |phi| < 1")
    x = np.empty((T, dim))
    u = rng.standard_normal((T, dim)) * math.sqrt(1.0 - phi * phi)
    prev = rng.standard_normal(dim)
    for t in range(T):
        prev = phi * prev + u[t]
        x[t] = prev
    return x


def _g_curve(u: np.ndarray) -> np.ndarray:
    return 2.0 * u + np.exp(-16.0 * (u - 0.5) ** 2) - 1.0


def _h_curve(u: np.ndarray) -> np.ndarray:
    return 0.2 * np.exp(-0.7 + 3.5 * u)


def logistic_curve(tau, kappa, gamma):
    return 1.0 / (1.0 + np.exp(-kappa * (np.asarray(tau, dtype=float) - gamma)))


def _assemble(R_path, C_path, F, E, p, q):
    Y = np.einsum("tik,tkr,tjr->tij", R_path, F, C_path, optimize=True) + E
    return MatrixSeries(data=Y)


def _factor_noise(config: ExperimentConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    T, p, q, k, r = config.T, config.p, config.q, config.k, config.r
    F = gen_var1(k * r, T, 0.1, rng).reshape(T, k, r)
    E = gen_var1(p * q, T, config.psi, rng).reshape(T, p, q)
    return F, E


def gen_dgp1(config: ExperimentConfig, rep: int = 0
             ) -> tuple[MatrixSeries, dict[str, Any]]:
    """Uniform base loadings; second columns drift by smooth scalar curves."""
    if config.k != 2 or config.r != 2:
        raise ValueError("dgp1 requires k = r = 2")
    rng = config.rng(rep)
    p, q, T = config.p, config.q, config.T
    R0 = rng.uniform(-1.0, 1.0, size=(p, 2))
    C0 = rng.uniform(-1.0, 1.0, size=(q, 2))
    u = np.arange(1, T + 1) / T
    R_path = np.repeat(R0[None], T, axis=0)
    C_path = np.repeat(C0[None], T, axis=0)
    R_path[:, :, 1] += _g_curve(u)[:, None]
    C_path[:, :, 1] += _h_curve(u)[:, None]
    F, E = _factor_noise(config, rng)
    series = _assemble(R_path, C_path, F, E, p, q)
    return series, {"R": R_path, "C": C_path, "F": F}


def gen_dgp2(config: ExperimentConfig, rep: int = 0
             ) -> tuple[MatrixSeries, dict[str, Any]]:
    """Gaussian base loadings; first columns drift, second columns logistic."""
    if config.k != 2 or config.r != 2:
        raise ValueError("dgp2 requires k = r = 2")
    rng = config.rng(rep)
    p, q, T = config.p, config.q, config.T
    R0 = rng.standard_normal((p, 2))
    C0 = rng.standard_normal((q, 2))
    u = np.arange(1, T + 1) / T
    R_path = np.repeat(R0[None], T, axis=0)
    C_path = np.repeat(C0[None], T, axis=0)
    R_path[:, :, 0] += _g_curve(u)[:, None]
    C_path[:, :, 0] += _h_curve(u)[:, None]
    i = np.arange(1, p + 1)
    j = np.arange(1, q + 1)
    R_path[:, :, 1] = logistic_curve(10.0 * u[:, None], 2.0, 5.0 * i[None] / p + 2.0)
    C_path[:, :, 1] = logistic_curve(10.0 * u[:, None], 2.0, 5.0 * j[None] / q + 2.0)
    F, E = _factor_noise(config, rng)
    series = _assemble(R_path, C_path, F, E, p, q)
    return series, {"R": R_path, "C": C_path, "F": F}


def coalescing_eigvals_row(u: np.ndarray) -> np.ndarray:
    """Diagonal of the row-side eigenvalue curve matrix at scaled times u."""
    c = np.cos(np.pi * np.asarray(u, dtype=float))
    return np.stack([3.5 - 1.5 * c, 3.0 - 1.5 * c,
                     0.5 * (1.0 + c), 0.5 * (1.0 - c)], axis=-1)


def coalescing_eigvals_col(u: np.ndarray) -> np.ndarray:
    """Diagonal of the column-side eigenvalue curve matrix at scaled times u."""
    u = np.asarray(u, dtype=float)
    c = np.cos(np.pi * u)
    return np.stack([4.0 - c, 3.0 - 1.5 * c, 1.25 * (1.0 + c),
                     0.5 + 0.5 * np.cos(1.5 * np.pi * u)], axis=-1)


def coalescing_truth_points(side: str) -> tuple[list[float], list[int]]:
    """Scaled crossing times and the (1-based) upper column index per crossing."""
    from scipy.optimize import brentq

    if side == "row":
        lam = coalescing_eigvals_row
        pairs = [(2, 3)]  # 0-based columns whose curves cross
        brackets = [(0.2, 0.8)]
    elif side == "column":
        lam = coalescing_eigvals_col
        pairs = [(1, 2), (2, 3)]
        brackets = [(0.05, 0.6), (0.6, 0.99)]
    else:
        raise ValueError("side must be 'row' or 'column'")
    points, kappas = [], []
    for (a, b), (lo, hi) in zip(pairs, brackets):
        f = lambda u: lam(u)[a] - lam(u)[b]
        points.append(float(brentq(f, lo, hi)))
        kappas.append(a + 1)
    return points, kappas


def _smooth_basis(T: int, d: int, w: float = 0.75, phi: float = 0.2) -> np.ndarray:
    """Time-varying 4 x d basis whose columns trace smooth sin/cos/exp curves."""
    u = np.arange(1, T + 1) / T
    Q = np.empty((T, 4, d))
    s = math.sqrt(2.0 / 3.0)
    for j in range(d):
        arg = j * np.pi * w * u - phi
        Q[:, 0, j] = np.sin(arg) * s
        Q[:, 1, j] = np.cos(arg) * s
        Q[:, 2, j] = np.exp(arg) * s
        Q[:, 3, j] = np.exp(-j * np.pi * w * u - phi) * s
    return Q


def _orthonormal(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Random n x d matrix with orthonormal columns."""
    A = rng.standard_normal((n, d))
    Q, _ = np.linalg.qr(A)
    return Q[:, :d]


def _polar_orthonormal(Q: np.ndarray) -> np.ndarray:
    """Symmetric orthonormalization Q (Q'Q)^{-1/2}, computed via the SVD.

    The polar factor is identical analytically but stays accurate when Q'Q
    is severely ill-conditioned (the smooth basis columns nearly coincide
    at small t).
    """
    u, _, vt = np.linalg.svd(Q, full_matrices=False)
    return u @ vt


def gen_coalescing(config: ExperimentConfig, rep: int = 0
                   ) -> tuple[MatrixSeries, dict[str, Any]]:
    """Coalescing-eigenvalue design with known crossing points.

    The studied side's loadings are Lambda^{1/2}-weighted smooth orthonormal
    curves; the opposite side stays orthonormal so the studied scatter
    matrix has eigenvalues proportional to the Lambda diagonal.  The signal
    is rescaled so snr_alpha2 is the realized signal-to-noise ratio.
    """
    if config.k != 4 or config.r != 4:
        raise ValueError("coalescing dgp requires k = r = 4")
    rng = config.rng(rep)
    p, q, T = config.p, config.q, config.T
    side = config.coalescing_side

    QR = _smooth_basis(T, 4)
    QC = _smooth_basis(T, 4)
    U_R = _orthonormal(rng, p, 4)
    U_C = _orthonormal(rng, q, 4)
    R_bar = np.empty((T, p, 4))
    C_bar = np.empty((T, q, 4))
    for t in range(T):
        R_bar[t] = U_R @ _polar_orthonormal(QR[t])
        C_bar[t] = U_C @ _polar_orthonormal(QC[t])

    u = np.arange(1, T + 1) / T
    lam_R = coalescing_eigvals_row(u)
    lam_C = coalescing_eigvals_col(u)

    F = gen_var1(16, T, 0.1, rng).reshape(T, 4, 4)
    if config.scenario == "s1":
        M = _orthonormal(rng, 4, 4)
        F = F + (2.0 * u[:, None, None]) * M[None]  # sqrt(k) = 2
    elif config.scenario == "s2":
        M = _orthonormal(rng, 4, 4)
        F = u[:, None, None] * M[None]

    if side == "row":
        R_path = R_bar * np.sqrt(lam_R)[:, None, :]
        C_path = C_bar
        lam_true = lam_R
    else:
        R_path = R_bar
        C_path = C_bar * np.sqrt(lam_C)[:, None, :]
        lam_true = lam_C
    X = np.einsum("tik,tkr,tjr->tij", R_path, F, C_path, optimize=True)
    # rescale so var(vec(X_t)) has unit average entry variance, making
    # snr_alpha2 the realized signal-to-noise ratio
    scale = math.sqrt(np.mean(X * X))
    if scale > 0:
        X = X / scale
    alpha = math.sqrt(config.snr_alpha2)
    E = gen_var1(p * q, T, config.psi, rng).reshape(T, p, q)
    series = MatrixSeries(data=alpha * X + E)
    truth = {
        "R": R_path, "C": C_path, "F": F,
        "lambda": lam_true, "side": side,
        "points": coalescing_truth_points(side)[0],
        "kappas": coalescing_truth_points(side)[1],
    }
    return series, truth


def generate(config: ExperimentConfig, rep: int = 0
             ) -> tuple[MatrixSeries, dict[str, Any]]:
    """Dispatch to the configured generator."""
    gen = {DGP1: gen_dgp1, DGP2: gen_dgp2, COALESCING: gen_coalescing}[config.dgp]
    return gen(config, rep)
