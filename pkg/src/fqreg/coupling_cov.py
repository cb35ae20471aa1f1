"""Covariance of the coupling Gaussian across grid locations for one contrast.

The T x T matrix collects cross-location moments of the standardized
influence contributions, with the diagonal either taken empirically (exact
Gram PSD) or replaced by the analytic marginal tau(1-tau) a'J^-1 E_n[XX'] J^-1 a.
Wavelet smoothing projects the matrix into an orthonormal Daubechies-4 basis,
keeps the diagonal there, and maps back.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dataset import Contrast, FunctionalDataset
from .qr_pointwise import PointwiseFit, _check_tau

log = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-8


@dataclass(frozen=True)
class CouplingCovariance:
    sigma: np.ndarray            # T x T
    sigma_marginal: np.ndarray   # length T, analytic marginal scale
    contrast: Contrast
    tau: float
    smoothed: bool = False

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float)
        m = np.asarray(self.sigma_marginal, dtype=float)
        object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "sigma_marginal", m)
        if s.shape != (m.size, m.size):
            raise ValueError("sigma must be T x T matching sigma_marginal")
        if not np.allclose(s, s.T, atol=1e-10 * (1.0 + np.abs(s).max())):
            raise ValueError("sigma must be symmetric")
        if np.any(m <= 0):
            bad = int(np.flatnonzero(m <= 0)[0])
            raise ValueError(f"non-positive marginal scale at location {bad}")


def j_inverse(fit: PointwiseFit, n: int) -> np.ndarray:
    """Estimate of the inverse local Hessian: n * V_hat, symmetrized."""
    m = n * np.asarray(fit.v_hat, dtype=float)
    return 0.5 * (m + m.T)


def _influence_matrix(ds: FunctionalDataset, fits: list[PointwiseFit],
                      tau: float, contrast: Contrast) -> np.ndarray:
    """n x T matrix Z with z_il = (a'J_l^-1 X_i) (1{Y_i(t_l) <= X_i'beta_l} - tau),
    so the empirical coupling covariance is Z'Z / n."""
    a = contrast.weights
    b = np.column_stack([f.beta_hat for f in fits])              # d x T
    w = np.column_stack([j_inverse(f, ds.n) @ a for f in fits])  # d x T
    u = (ds.responses <= ds.design @ b).astype(float) - tau      # n x T
    return (ds.design @ w) * u


def cross_moment(ds: FunctionalDataset, fits: list[PointwiseFit], l: int, j: int,
                 tau: float, contrast: Contrast) -> float:
    """Entry (l, j) of the coupling covariance from the plug-in cross moment."""
    tau = _check_tau(tau)
    a = contrast.weights
    x = ds.design
    wl = j_inverse(fits[l], ds.n) @ a
    wj = j_inverse(fits[j], ds.n) @ a
    ul = (ds.responses[:, l] <= x @ fits[l].beta_hat).astype(float) - tau
    uj = (ds.responses[:, j] <= x @ fits[j].beta_hat).astype(float) - tau
    return float(np.mean((x @ wl) * ul * (x @ wj) * uj))


def marginal_scale(ds: FunctionalDataset, fits: list[PointwiseFit], tau: float,
                   contrast: Contrast) -> np.ndarray:
    """Analytic marginal sd sqrt(tau(1-tau) a'J_l^-1 E_n[XX'] J_l^-1 a) per location."""
    a = contrast.weights
    exx = ds.design.T @ ds.design / ds.n
    var = np.array([
        tau * (1.0 - tau) * (j_inverse(f, ds.n) @ a) @ exx @ (j_inverse(f, ds.n) @ a)
        for f in fits
    ])
    if np.any(var <= 0):
        bad = int(np.flatnonzero(var <= 0)[0])
        raise ValueError(f"non-positive marginal variance at location {bad}")
    return np.sqrt(var)


def assemble_sigma(ds: FunctionalDataset, fits: list[PointwiseFit], tau: float,
                   contrast: Contrast, diagonal_mode: str = "analytic") -> CouplingCovariance:
    """Build the full coupling covariance for one contrast.

    diagonal_mode 'empirical' keeps the exact Gram diagonal (PSD guaranteed);
    'analytic' replaces it with the marginal formula and, if that breaks
    positive semidefiniteness, adds the minimal diagonal shift (logged).
    """
    tau = _check_tau(tau)
    if len(fits) != ds.t:
        raise ValueError(f"need fits at all {ds.t} locations, got {len(fits)}")
    if diagonal_mode not in ("empirical", "analytic"):
        raise ValueError(f"unknown diagonal_mode {diagonal_mode!r}")
    z = _influence_matrix(ds, fits, tau, contrast)
    sigma = z.T @ z / ds.n
    sigma = 0.5 * (sigma + sigma.T)
    marg = marginal_scale(ds, fits, tau, contrast)
    if diagonal_mode == "analytic":
        np.fill_diagonal(sigma, marg ** 2)
        lam = np.linalg.eigvalsh(sigma)
        if lam[0] < -PSD_TOLERANCE * max(lam[-1], 0.0):
            shift = -lam[0] + 1e-10
            sigma = sigma + shift * np.eye(ds.t)
            log.warning("analytic diagonal broke PSD; added diagonal shift %.3e", shift)
    return CouplingCovariance(sigma=sigma, sigma_marginal=marg, contrast=contrast,
                              tau=tau, smoothed=False)


_D4_LOWPASS = np.array([1 + np.sqrt(3), 3 + np.sqrt(3), 3 - np.sqrt(3), 1 - np.sqrt(3)])
_D4_LOWPASS /= 4 * np.sqrt(2)


@lru_cache(maxsize=8)
def dwt_matrix(size: int) -> np.ndarray:
    """Orthonormal full-depth Daubechies-4 transform with periodic boundary.

    size must be a power of two; returns W with W W' = I.
    """
    if size < 2 or size & (size - 1):
        raise ValueError(f"transform size must be a power of two >= 2, got {size}")
    h = _D4_LOWPASS
    g = np.array([h[3], -h[2], h[1], -h[0]])  # quadrature mirror highpass

    w = np.eye(size)
    m = size
    while m >= 2:
        step = np.zeros((m, m))
        half = m // 2
        for k in range(half):
            for j in range(4):
                col = (2 * k + j) % m
                step[k, col] += h[j]
                step[half + k, col] += g[j]
        full = np.eye(size)
        full[:m, :m] = step
        w = full @ w
        m = half
    return w


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def _reflect_indices(t: int, size: int) -> np.ndarray:
    """Indices 0..t-1 extended to length size by symmetric reflection."""
    idx = list(range(t))
    pos, direction = t - 2, -1
    while len(idx) < size:
        idx.append(pos)
        pos += direction
        if pos < 0:
            pos, direction = 1, 1
        elif pos >= t:
            pos, direction = t - 2, -1
    return np.asarray(idx)


def wavelet_smooth(cov: CouplingCovariance) -> CouplingCovariance:
    """Keep only the diagonal of the covariance in the wavelet basis.

    The matrix is reflection-padded to the next power of two, transformed,
    diagonalized, transformed back, and restricted to the original block.
    Idempotent for power-of-two T; preserves symmetry and PSD.
    """
    t = cov.sigma.shape[0]
    size = _next_pow2(t)
    idx = _reflect_indices(t, size)
    padded = cov.sigma[np.ix_(idx, idx)]
    w = dwt_matrix(size)
    diag = np.diag(w @ padded @ w.T)
    smooth = w.T @ (diag[:, None] * w)
    smooth = 0.5 * (smooth + smooth.T)
    return CouplingCovariance(sigma=smooth[:t, :t], sigma_marginal=cov.sigma_marginal,
                              contrast=cov.contrast, tau=cov.tau, smoothed=True)
