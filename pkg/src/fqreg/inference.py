"""Simultaneous and pointwise bands, critical values, SimBaS, and flagging.

The critical value is the empirical (1-alpha) quantile of the supremum of
the standardized coupling Gaussian over the grid, by Monte Carlo from a
single Cholesky factor. SimBaS scores share the same draws so the duality
"score <= alpha iff the (1-alpha) joint band excludes zero" holds exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .band_estimators import CurveEstimate
from .coupling_cov import CouplingCovariance

log = logging.getLogger(__name__)

# practical-significance magnitude cut for log2-scale effects (1.5-fold change)
FOLD_THRESHOLD = 0.5 * np.log2(1.5)


@dataclass(frozen=True)
class BandResult:
    estimate: CurveEstimate
    pointwise_lo: np.ndarray
    pointwise_hi: np.ndarray
    joint_lo: np.ndarray
    joint_hi: np.ndarray
    c_n_alpha: float
    alpha: float
    simbas: np.ndarray
    flags: np.ndarray
    mc_draws: int
    seed: int


def _psd_cholesky(sigma: np.ndarray) -> np.ndarray:
    """Cholesky factor with a minimal diagonal shift when sigma is indefinite."""
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        lam_min = float(np.linalg.eigvalsh(sigma)[0])
        shift = abs(lam_min) + 1e-10
        log.warning("covariance not PSD; shifting diagonal by %.3e", shift)
        try:
            return np.linalg.cholesky(sigma + shift * np.eye(sigma.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                f"Cholesky failed even after diagonal shift {shift:.3e}"
            ) from exc


def sup_statistics(cov: CouplingCovariance, mc_draws: int, seed: int) -> np.ndarray:
    """mc_draws samples of max_l |G_l / sigma_n(t_l)| with G ~ MVN(0, Sigma)."""
    if mc_draws < 1000:
        raise ValueError(f"mc_draws must be >= 1000, got {mc_draws}")
    chol = _psd_cholesky(cov.sigma)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    t = cov.sigma.shape[0]
    inv_scale = 1.0 / cov.sigma_marginal
    stats = np.empty(mc_draws)
    block = max(1, min(mc_draws, 2_000_000 // max(t, 1)))
    done = 0
    while done < mc_draws:
        m = min(block, mc_draws - done)
        z = rng.standard_normal((t, m))
        g = chol @ z
        stats[done:done + m] = np.max(np.abs(g) * inv_scale[:, None], axis=0)
        done += m
    return stats


def _critical_from_stats(stats: np.ndarray, alpha: float) -> float:
    """Order-statistic quantile chosen so exactly floor(alpha*m) draws exceed it."""
    m = stats.size
    k = int(np.floor(alpha * m))
    return float(np.sort(stats)[m - k - 1])


def critical_value(cov: CouplingCovariance, alpha: float, mc_draws: int,
                   seed: int) -> float:
    """Critical multiplier C_n(alpha) for the simultaneous band."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return _critical_from_stats(sup_statistics(cov, mc_draws, seed), alpha)


def simultaneous_band(est_values: np.ndarray, cov: CouplingCovariance, n: int,
                      alpha: float, mc_draws: int, seed: int,
                      estimate: CurveEstimate | None = None,
                      fold_threshold: float = FOLD_THRESHOLD) -> BandResult:
    """Joint band est +- C_n(alpha) sigma_n/sqrt(n); pointwise uses z_{1-alpha/2}.

    SimBaS shares the Monte Carlo draws with the critical value, and flags
    combine band exclusion of zero with the magnitude threshold.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    est = np.asarray(est_values, dtype=float)
    stats = sup_statistics(cov, mc_draws, seed)
    c_n = _critical_from_stats(stats, alpha)
    scale = cov.sigma_marginal / np.sqrt(n)
    z = norm.ppf(1.0 - alpha / 2.0)
    joint_lo, joint_hi = est - c_n * scale, est + c_n * scale
    standardized = np.abs(est) / scale
    simbas = np.mean(stats[None, :] >= standardized[:, None], axis=1)
    excludes_zero = standardized > c_n
    flags = excludes_zero & (np.abs(est) > fold_threshold)
    return BandResult(
        estimate=estimate,
        pointwise_lo=est - z * scale, pointwise_hi=est + z * scale,
        joint_lo=joint_lo, joint_hi=joint_hi,
        c_n_alpha=c_n, alpha=alpha, simbas=simbas, flags=flags,
        mc_draws=mc_draws, seed=seed,
    )


def simbas(est_values: np.ndarray, cov: CouplingCovariance, n: int,
           mc_draws: int, seed: int) -> np.ndarray:
    """Minimum alpha at which the (1-alpha) simultaneous band excludes zero."""
    est = np.asarray(est_values, dtype=float)
    stats = sup_statistics(cov, mc_draws, seed)
    standardized = np.sqrt(n) * np.abs(est) / cov.sigma_marginal
    return np.mean(stats[None, :] >= standardized[:, None], axis=1)


def flag_locations(band: BandResult, fold_threshold: float = FOLD_THRESHOLD) -> np.ndarray:
    """Locations where the joint band excludes zero and the estimate is large."""
    est = 0.5 * (band.joint_lo + band.joint_hi)
    excludes_zero = (band.joint_lo > 0.0) | (band.joint_hi < 0.0)
    return excludes_zero & (np.abs(est) > fold_threshold)
