"""Fit -> covariance -> curve estimate -> band, for one (tau, contrast) pair.

Shared by the CLI and the simulation lab so both run the identical chain of
steps: per-location fits, coupling covariance (optionally wavelet-smoothed),
then either an interpolation band or the GP posterior credible band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import band_estimators as be
from . import bayes_gp as gp
from . import coupling_cov as cc
from . import inference as inf
from .dataset import Contrast, FunctionalDataset, SamplingGrid
from .qr_pointwise import PointwiseFit, SolverConfig, fit_all_locations

METHODS = ("li", "spline2", "presmooth-li", "bayes-gp")


@dataclass(frozen=True)
class ContrastAnalysis:
    method: str
    tau: float
    contrast: Contrast
    node_values: np.ndarray          # estimate at the sampling grid
    band: inf.BandResult
    cov: cc.CouplingCovariance
    gp_hyper: gp.GpHyper | None = None


def analyze_contrast(ds: FunctionalDataset, fits: list[PointwiseFit], tau: float,
                     contrast: Contrast, method: str, alpha: float, mc_draws: int,
                     seed: int, wavelet_smooth: bool = True,
                     diagonal_mode: str = "analytic",
                     fold_threshold: float = inf.FOLD_THRESHOLD,
                     gp_search: gp.GpSearchConfig | None = None) -> ContrastAnalysis:
    """Band inference for one contrast given per-location fits.

    'presmooth-li' is handled by the caller (it needs fits on the smoothed
    dataset) and behaves like 'li' here.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    mu_hat = be.extract_contrast(fits, contrast)
    cov = cc.assemble_sigma(ds, fits, tau, contrast, diagonal_mode=diagonal_mode)
    if wavelet_smooth:
        cov = cc.wavelet_smooth(cov)

    grid = ds.grid
    if method == "bayes-gp":
        hyper = gp.fit_hyper(mu_hat, cov, ds.n, grid.points, search=gp_search)
        post = gp.posterior(mu_hat, cov, ds.n, hyper, grid.points, grid.points)
        est = be.CurveEstimate(method=method, eval_grid=grid, values=post.mean,
                               tau=tau, contrast=contrast)
        band = gp.credible_band(post, alpha, mc_draws, seed, estimate=est,
                                fold_threshold=fold_threshold)
        return ContrastAnalysis(method=method, tau=tau, contrast=contrast,
                                node_values=post.mean, band=band, cov=cov,
                                gp_hyper=hyper)

    est = be.CurveEstimate(method=method, eval_grid=grid, values=mu_hat,
                           tau=tau, contrast=contrast)
    band = inf.simultaneous_band(mu_hat, cov, ds.n, alpha, mc_draws, seed,
                                 estimate=est, fold_threshold=fold_threshold)
    return ContrastAnalysis(method=method, tau=tau, contrast=contrast,
                            node_values=mu_hat, band=band, cov=cov)


def evaluate_curve(analysis: ContrastAnalysis, grid: SamplingGrid,
                   query: np.ndarray) -> np.ndarray:
    """Evaluate the fitted curve between nodes, per the analysis method."""
    if analysis.method == "spline2":
        return be.spline_interpolate(grid, analysis.node_values, 2, query)
    return be.linear_interpolate(grid, analysis.node_values, query)


def density_warning(n: int, t: int) -> str | None:
    """Band validity needs a grid denser than sqrt(n); warn below that."""
    if t < np.sqrt(n):
        return (f"grid has T={t} < sqrt(n)={np.sqrt(n):.1f} points; the "
                "simultaneous band's interpolation bias may not be negligible")
    return None
