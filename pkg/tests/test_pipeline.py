import numpy as np
import pytest

from fqreg.dataset import Contrast
from fqreg.pipeline import (METHODS, analyze_contrast, density_warning,
                            evaluate_curve)
from fqreg.qr_pointwise import SolverConfig, fit_all_locations

from conftest import random_dataset

FAST_CFG = SolverConfig(chain_length=600, burn_in=150, seed=3)


@pytest.fixture
def fitted(rng):
    ds = random_dataset(rng, 120, 8, 2, beta=[0.5, 1.0])
    fits = fit_all_locations(ds, 0.5, FAST_CFG)
    return ds, fits


class TestAnalyzeContrast:
    def test_interpolation_methods_share_node_values(self, fitted):
        ds, fits = fitted
        a = Contrast.unit(1, 2)
        li = analyze_contrast(ds, fits, 0.5, a, "li", 0.05, 2000, seed=5)
        sp = analyze_contrast(ds, fits, 0.5, a, "spline2", 0.05, 2000, seed=5)
        assert np.array_equal(li.node_values, sp.node_values)
        assert li.band.c_n_alpha == sp.band.c_n_alpha
        # between nodes the two methods genuinely differ
        mid = 0.5 * (ds.grid.points[:-1] + ds.grid.points[1:])
        assert not np.allclose(evaluate_curve(li, ds.grid, mid),
                               evaluate_curve(sp, ds.grid, mid))

    def test_node_values_are_contrast_of_fits(self, fitted):
        ds, fits = fitted
        a = Contrast.unit(1, 2)
        out = analyze_contrast(ds, fits, 0.5, a, "li", 0.05, 2000, seed=5)
        ref = np.array([a.weights @ f.beta_hat for f in fits])
        assert np.array_equal(out.node_values, ref)

    def test_wavelet_toggle_changes_covariance(self, fitted):
        ds, fits = fitted
        a = Contrast.unit(1, 2)
        sm = analyze_contrast(ds, fits, 0.5, a, "li", 0.05, 2000, 5,
                              wavelet_smooth=True)
        raw = analyze_contrast(ds, fits, 0.5, a, "li", 0.05, 2000, 5,
                               wavelet_smooth=False)
        assert sm.cov.smoothed and not raw.cov.smoothed
        assert not np.array_equal(sm.cov.sigma, raw.cov.sigma)

    def test_gp_method_reports_hyper(self, fitted):
        ds, fits = fitted
        out = analyze_contrast(ds, fits, 0.5, Contrast.unit(1, 2), "bayes-gp",
                               0.05, 2000, seed=5)
        assert out.gp_hyper is not None
        assert out.gp_hyper.adjusted
        # posterior mean, not the raw node estimate
        raw = np.array([f.beta_hat[1] for f in fits])
        assert not np.array_equal(out.node_values, raw)

    def test_unknown_method(self, fitted):
        ds, fits = fitted
        with pytest.raises(ValueError, match="unknown method"):
            analyze_contrast(ds, fits, 0.5, Contrast.unit(0, 2), "magic",
                             0.05, 2000, 5)

    def test_deterministic(self, fitted):
        ds, fits = fitted
        a = Contrast.unit(1, 2)
        o1 = analyze_contrast(ds, fits, 0.5, a, "li", 0.05, 2000, seed=9)
        o2 = analyze_contrast(ds, fits, 0.5, a, "li", 0.05, 2000, seed=9)
        assert o1.band.c_n_alpha == o2.band.c_n_alpha
        assert np.array_equal(o1.band.simbas, o2.band.simbas)


class TestDensityWarning:
    def test_sparse_grid_warns(self):
        msg = density_warning(n=400, t=8)
        assert msg is not None and "sqrt" in msg

    def test_dense_grid_silent(self):
        assert density_warning(n=400, t=128) is None

    def test_methods_registry(self):
        assert set(METHODS) == {"li", "spline2", "presmooth-li", "bayes-gp"}
