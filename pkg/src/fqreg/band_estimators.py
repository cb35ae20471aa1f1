"""Whole-domain coefficient-function estimates from per-location fits.

Linear interpolation, interpolating splines of order 1 or 2 (order 1 is
exactly linear interpolation; order 2 is the natural cubic interpolating
spline), and a per-curve pre-smoothing comparator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, make_smoothing_spline

from .dataset import Contrast, FunctionalDataset, SamplingGrid
from .qr_pointwise import PointwiseFit


@dataclass(frozen=True)
class CurveEstimate:
    method: str                 # "li" | "spline2" | "presmooth-li" | "bayes-gp"
    eval_grid: SamplingGrid
    values: np.ndarray
    tau: float
    contrast: Contrast

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.size != len(self.eval_grid):
            raise ValueError("values length must match eval grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("estimate contains non-finite values")


def extract_contrast(fits: list[PointwiseFit], contrast: Contrast) -> np.ndarray:
    """Length-T vector of a'beta_hat(t_l)."""
    return np.array([contrast.weights @ f.beta_hat for f in fits])


def _check_domain(grid: SamplingGrid, query: np.ndarray) -> np.ndarray:
    q = np.atleast_1d(np.asarray(query, dtype=float))
    lo, hi = grid.points[0], grid.points[-1]
    if np.any(q < lo) or np.any(q > hi):
        bad = q[(q < lo) | (q > hi)][0]
        raise ValueError(f"query point {bad} outside domain [{lo}, {hi}]")
    return q


def linear_interpolate(grid: SamplingGrid, values, query) -> np.ndarray:
    """Piecewise-linear interpolant through (t_l, values_l), domain-restricted."""
    q = _check_domain(grid, query)
    return np.interp(q, grid.points, np.asarray(values, dtype=float))


def spline_interpolate(grid: SamplingGrid, values, r: int, query) -> np.ndarray:
    """Interpolant minimizing the integrated squared r-th derivative.

    r=1 coincides with linear interpolation; r=2 is the natural cubic spline.
    """
    if r == 1:
        return linear_interpolate(grid, values, query)
    if r == 2:
        q = _check_domain(grid, query)
        cs = CubicSpline(grid.points, np.asarray(values, dtype=float), bc_type="natural")
        return cs(q)
    raise ValueError(f"unsupported spline order {r}; only r in {{1, 2}}")


def presmooth_dataset(ds: FunctionalDataset, lam: float | None = None) -> FunctionalDataset:
    """Replace each response curve by its cubic smoothing-spline fit.

    lam is the roughness penalty; None selects it per curve by generalized
    cross-validation. Design and grid are unchanged.
    """
    t = ds.grid.points
    smoothed = np.empty_like(ds.responses)
    for i in range(ds.n):
        spl = make_smoothing_spline(t, ds.responses[i], lam=lam)
        smoothed[i] = spl(t)
    return FunctionalDataset(responses=smoothed, design=ds.design, grid=ds.grid)
