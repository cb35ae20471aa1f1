import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fqreg.dataset import FunctionalDataset, SamplingGrid
from fqreg.qr_pointwise import (PointwiseFit, SolverConfig, SolverError, al_posterior_cov,
                                check_loss, fit_all_locations, fit_location, psi)

from conftest import intercept_dataset, random_dataset


class TestCheckLoss:
    def test_values(self):
        assert check_loss(2.0, 0.25) == pytest.approx(0.5)
        assert check_loss(-2.0, 0.25) == pytest.approx(1.5)
        assert check_loss(0.0, 0.7) == 0.0

    @given(st.floats(-1e6, 1e6), st.floats(0.01, 0.99))
    def test_nonnegative_and_piecewise_linear(self, u, tau):
        val = check_loss(u, tau)
        assert val >= 0.0
        expected = tau * u if u > 0 else (tau - 1.0) * u
        assert val == pytest.approx(expected, abs=1e-9)

    def test_tau_out_of_range(self):
        with pytest.raises(ValueError):
            check_loss(1.0, 1.0)


class TestPsi:
    def test_indicator_form(self):
        # y <= x'beta: psi = x * (1 - tau)
        out = psi(0.5, np.array([1.0, 2.0]), np.array([1.0, 0.0]), 0.3)
        assert np.allclose(out, np.array([1.0, 2.0]) * 0.7)
        # y > x'beta: psi = -tau * x
        out = psi(2.0, np.array([1.0, 2.0]), np.array([1.0, 0.0]), 0.3)
        assert np.allclose(out, np.array([1.0, 2.0]) * -0.3)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psi(0.0, np.ones(2), np.ones(3), 0.5)


class TestExactSolve:
    def test_median_of_five(self):
        ds = intercept_dataset([1.0, 2.0, 3.0, 4.0, 5.0])
        fit = fit_location(ds, 0, 0.5)
        assert fit.beta_hat[0] == pytest.approx(3.0, abs=1e-7)

    def test_even_sample_tie_takes_lower_endpoint(self):
        ds = intercept_dataset([1.0, 2.0, 3.0, 4.0])
        fit = fit_location(ds, 0, 0.5)
        # any value in [2, 3] minimizes; convention picks the lower endpoint
        assert fit.beta_hat[0] == pytest.approx(2.0, abs=1e-6)

    def test_intercept_only_matches_sample_quantile(self, rng):
        y = rng.standard_normal(501)
        ds = intercept_dataset(y)
        for tau in (0.1, 0.5, 0.9):
            fit = fit_location(ds, 0, tau)
            ref = np.quantile(y, tau, method="inverted_cdf")
            assert fit.beta_hat[0] == pytest.approx(ref, abs=1e-7)

    def test_brute_force_vertex_oracle(self, rng):
        # the minimizer interpolates d observations: enumerate all pairs
        n, d = 13, 2
        x = np.column_stack([np.ones(n), rng.standard_normal(n)])
        y = rng.standard_normal(n)
        tau = 0.3
        best = np.inf
        for i in range(n):
            for j in range(i + 1, n):
                sub = x[[i, j]]
                if abs(np.linalg.det(sub)) < 1e-12:
                    continue
                b = np.linalg.solve(sub, y[[i, j]])
                best = min(best, float(np.sum(check_loss(y - x @ b, tau))))
        ds = FunctionalDataset(y[:, None].repeat(2, axis=1), x,
                               SamplingGrid(np.array([0.0, 1.0])))
        fit = fit_location(ds, 0, tau)
        assert fit.objective == pytest.approx(best, rel=1e-9)

    def test_subgradient_bound_recorded(self, rng):
        ds = random_dataset(rng, 80, 2, 3, beta=[1.0, 0.5, -0.25])
        fit = fit_location(ds, 1, 0.7)
        bound = ds.d / ds.n * np.max(np.linalg.norm(ds.design, axis=1)) + 1e-8
        assert fit.subgrad_norm <= bound

    def test_location_equivariance(self, rng):
        ds = random_dataset(rng, 60, 2, 2, beta=[0.0, 1.0])
        shift = np.array([2.5, -1.0])
        shifted = FunctionalDataset(ds.responses + (ds.design @ shift)[:, None],
                                    ds.design, ds.grid)
        f0 = fit_location(ds, 0, 0.4)
        f1 = fit_location(shifted, 0, 0.4)
        assert np.allclose(f1.beta_hat, f0.beta_hat + shift, atol=1e-6)

    def test_scale_equivariance(self, rng):
        ds = random_dataset(rng, 60, 2, 2, beta=[0.0, 1.0])
        scaled = FunctionalDataset(3.0 * ds.responses, ds.design, ds.grid)
        f0 = fit_location(ds, 0, 0.25)
        f1 = fit_location(scaled, 0, 0.25)
        assert np.allclose(f1.beta_hat, 3.0 * f0.beta_hat, atol=1e-6)

    def test_bad_location_index(self, rng):
        ds = random_dataset(rng, 20, 2, 1)
        with pytest.raises(IndexError):
            fit_location(ds, 5, 0.5)


class TestAlPosterior:
    def test_v_hat_symmetric_psd(self, rng):
        ds = random_dataset(rng, 120, 2, 2, beta=[0.5, 1.0])
        v = al_posterior_cov(ds, 0, 0.5, SolverConfig(seed=7))
        assert np.allclose(v, v.T)
        assert np.min(np.linalg.eigvalsh(v)) > 0.0

    def test_scaled_v_estimates_inverse_curvature(self, rng):
        # intercept-only standard normal, tau = 0.5: the sandwich middle
        # matrix is J = f(Q_tau) = phi(0), so n * V_hat targets 1/phi(0).
        # Averaged over data replicates to tame sampling noise.
        n, reps = 2000, 6
        vals = []
        for r in range(reps):
            ds = intercept_dataset(rng.standard_normal(n))
            cfg = SolverConfig(chain_length=4000, burn_in=800, seed=11 + r)
            vals.append(n * al_posterior_cov(ds, 0, 0.5, cfg)[0, 0])
        target = np.sqrt(2.0 * np.pi)  # 1 / phi(0)
        assert np.mean(vals) == pytest.approx(target, rel=0.15)

    def test_duplicating_rows_halves_v(self, rng):
        y = rng.standard_normal(400)
        ds = intercept_dataset(y)
        ds2 = intercept_dataset(np.concatenate([y, y]))
        cfg = SolverConfig(chain_length=6000, burn_in=1000, seed=3)
        v1 = al_posterior_cov(ds, 0, 0.5, cfg)[0, 0]
        v2 = al_posterior_cov(ds2, 0, 0.5, cfg)[0, 0]
        assert v2 / v1 == pytest.approx(0.5, rel=0.25)

    def test_deterministic_given_seed(self, rng):
        ds = random_dataset(rng, 50, 2, 2)
        cfg = SolverConfig(seed=42)
        v1 = al_posterior_cov(ds, 1, 0.3, cfg)
        v2 = al_posterior_cov(ds, 1, 0.3, cfg)
        assert np.array_equal(v1, v2)

    def test_seed_changes_draws(self, rng):
        ds = random_dataset(rng, 50, 2, 2)
        v1 = al_posterior_cov(ds, 0, 0.5, SolverConfig(seed=1))
        v2 = al_posterior_cov(ds, 0, 0.5, SolverConfig(seed=2))
        assert not np.array_equal(v1, v2)


class TestFitAllLocations:
    def test_matches_single_location_calls(self, rng):
        from fqreg.qr_pointwise import location_seed
        from dataclasses import replace
        ds = random_dataset(rng, 40, 4, 2)
        cfg = SolverConfig(chain_length=800, burn_in=200, seed=5)
        fits = fit_all_locations(ds, 0.5, cfg)
        assert [f.location_index for f in fits] == list(range(ds.t))
        solo = fit_location(ds, 2, 0.5, replace(cfg, seed=location_seed(5, 2)))
        assert np.array_equal(fits[2].beta_hat, solo.beta_hat)
        assert np.array_equal(fits[2].v_hat, solo.v_hat)

    def test_parallel_matches_serial(self, rng):
        ds = random_dataset(rng, 40, 4, 2)
        cfg = SolverConfig(chain_length=800, burn_in=200, seed=5)
        serial = fit_all_locations(ds, 0.5, cfg, parallelism=1)
        par = fit_all_locations(ds, 0.5, cfg, parallelism=2)
        for a, b in zip(serial, par):
            assert np.array_equal(a.beta_hat, b.beta_hat)
            assert np.array_equal(a.v_hat, b.v_hat)

    def test_bahadur_large_sample_agreement(self, rng):
        # with n large the location fits at two columns sharing the same noise
        # ranks should be nearly perfectly correlated across replicates
        n, reps = 2000, 40
        tau = 0.5
        ests = np.empty((reps, 2))
        for r in range(reps):
            eps = rng.standard_normal(n)
            y = np.column_stack([eps, eps + 0.01 * rng.standard_normal(n)])
            ds = FunctionalDataset(y, np.ones((n, 1)),
                                   SamplingGrid(np.array([0.0, 1.0])))
            cfg = SolverConfig(chain_length=600, burn_in=100, seed=r)
            fits = fit_all_locations(ds, tau, cfg)
            ests[r] = [fits[0].beta_hat[0], fits[1].beta_hat[0]]
        corr = np.corrcoef(ests[:, 0], ests[:, 1])[0, 1]
        assert corr > 0.95
