import numpy as np
import pytest
from scipy.stats import kstest, norm, t as t_dist

import fqreg.simlab as simlab
from fqreg.dataset import Contrast, SamplingGrid
from fqreg.inference import BandResult
from fqreg.qr_pointwise import SolverConfig
from fqreg.simlab import (binary_scenario, continuous_scenario, gen_binary,
                          gen_continuous, metrics, run_study, sample_noise,
                          scenario_by_name, true_quantile_curve)


class TestScenarios:
    def test_continuous_defaults(self):
        s = continuous_scenario()
        assert (s.n, s.t) == (400, 128)
        assert s.domain == (0.0, 5.10)
        assert s.coefficients == (1, 2)

    def test_binary_defaults(self):
        s = binary_scenario()
        assert (s.n, s.t) == (500, 256)
        assert s.domain == (0.0, 8.0)
        assert s.coefficients == (1,)

    def test_scenario_by_name_with_overrides(self):
        s = scenario_by_name("continuous", n=50, t=16)
        assert (s.n, s.t) == (50, 16)

    def test_unknown_scenario(self):
        with pytest.raises(ValueError, match="unknown scenario"):
            scenario_by_name("nope")


class TestGenerators:
    def test_continuous_shapes_and_design(self):
        ds, _ = gen_continuous(3, continuous_scenario(n=30, t=16))
        assert ds.responses.shape == (30, 16)
        assert np.array_equal(ds.design[:, 0], np.ones(30))
        assert ds.d == 3

    def test_binary_design_is_sign_coded(self):
        ds, _ = gen_binary(3, binary_scenario(n=40, t=16))
        assert set(np.unique(ds.design[:, 1])) == {-1.0, 1.0}
        assert ds.d == 2

    def test_deterministic_in_seed(self):
        s = continuous_scenario(n=20, t=8)
        d1, _ = gen_continuous(7, s)
        d2, _ = gen_continuous(7, s)
        d3, _ = gen_continuous(8, s)
        assert np.array_equal(d1.responses, d2.responses)
        assert not np.array_equal(d1.responses, d3.responses)

    def test_kind_mismatch(self):
        with pytest.raises(ValueError, match="continuous"):
            gen_continuous(0, binary_scenario(n=10, t=8))


class TestNoise:
    def test_t3_marginal_distribution(self):
        s = continuous_scenario(n=4000, t=2)
        rng = np.random.default_rng(5)
        eps = sample_noise(s, rng)
        stat = kstest(eps[:, 0], t_dist(3.0).cdf)
        assert stat.pvalue > 0.01

    def test_t3_lag_one_correlation_calibrated(self):
        s = continuous_scenario(n=40000, t=2)
        rng = np.random.default_rng(6)
        eps = sample_noise(s, rng)
        corr = np.corrcoef(eps[:, 0], eps[:, 1])[0, 1]
        assert corr == pytest.approx(0.5, abs=0.06)

    def test_gaussian_noise_moments(self):
        s = binary_scenario(n=4000, t=40)
        rng = np.random.default_rng(7)
        eps = sample_noise(s, rng)
        assert np.std(eps) == pytest.approx(4.0, rel=0.05)
        corr = np.corrcoef(eps[:, :-1].ravel(), eps[:, 1:].ravel())[0, 1]
        assert corr == pytest.approx(0.8, abs=0.02)


class TestContinuousTruth:
    def test_peak_maxima(self):
        s = continuous_scenario()
        grid = np.array([1.0, 3.0])
        b1 = true_quantile_curve(s, 0.5, 1, grid)
        b2 = true_quantile_curve(s, 0.5, 2, grid)
        assert b1[0] == pytest.approx(0.75 / (0.2 * np.sqrt(2 * np.pi)), rel=1e-12)
        assert b1[0] == pytest.approx(1.4960, abs=5e-4)
        assert b2[1] == pytest.approx(0.9974, abs=5e-4)

    def test_slope_curves_quantile_invariant(self):
        s = continuous_scenario()
        grid = np.linspace(0.0, 5.10, 20)
        for coef in (1, 2):
            assert np.array_equal(true_quantile_curve(s, 0.1, coef, grid),
                                  true_quantile_curve(s, 0.9, coef, grid))

    def test_intercept_is_noise_quantile(self):
        s = continuous_scenario()
        grid = np.zeros(3)
        out = true_quantile_curve(s, 0.9, 0, grid)
        assert np.allclose(out, t_dist.ppf(0.9, 3.0))


class TestBinaryTruth:
    # peak layout: index 0 at mu=1 has Gaussian heights in both groups
    # (means 18.5 vs 20), index 2 at mu=5 has identical group distributions

    def test_gaussian_peak_median_difference(self):
        s = binary_scenario()
        out = true_quantile_curve(s, 0.5, 1, np.array([1.0]), draws=400_000)
        expected = 0.5 * 1.5 * norm.pdf(0.0, 0.0, 0.25)
        assert out[0] == pytest.approx(expected, abs=0.03)

    def test_gaussian_peak_quantile_invariant(self):
        # both groups Gaussian with equal total variance at mu=1, so the
        # group quantile difference is the same at every level
        s = binary_scenario()
        grid = np.array([1.0])
        vals = [true_quantile_curve(s, tau, 1, grid, draws=400_000)[0]
                for tau in (0.25, 0.5, 0.75)]
        assert np.max(vals) - np.min(vals) < 0.05

    def test_identical_groups_give_zero_effect(self):
        s = binary_scenario()
        out = true_quantile_curve(s, 0.5, 1, np.array([5.0]), draws=400_000)
        assert out[0] == pytest.approx(0.0, abs=0.03)

    def test_far_from_peaks_zero_effect(self):
        s = binary_scenario()
        # midpoint between peaks at 1 and 3: basis ~ exp(-32), pure noise
        out = true_quantile_curve(s, 0.9, 1, np.array([2.0]), draws=400_000)
        assert out[0] == pytest.approx(0.0, abs=0.03)

    def test_oracle_deterministic(self):
        s = binary_scenario()
        g = np.array([1.0, 7.0])
        a = true_quantile_curve(s, 0.5, 1, g, draws=100_000)
        b = true_quantile_curve(s, 0.5, 1, g, draws=100_000)
        assert np.array_equal(a, b)

    def test_bad_coefficient(self):
        with pytest.raises(ValueError, match="coefficient"):
            true_quantile_curve(binary_scenario(), 0.5, 2, np.array([1.0]))


class TestMetrics:
    def test_hand_computed_values(self):
        grid = SamplingGrid(np.array([0.0, 1.0, 2.0, 3.0]))  # domain length 3
        est = np.array([1.0, 2.0, 3.0, 4.0])
        truth = np.array([1.0, 2.0, 3.0, 2.0])  # one miss of size 2
        band = BandResult(
            estimate=None,
            pointwise_lo=est - 0.5, pointwise_hi=est + 0.5,
            joint_lo=est - 1.0, joint_hi=est + 1.0,
            c_n_alpha=2.0, alpha=0.05,
            simbas=np.zeros(4), flags=np.zeros(4, dtype=bool),
            mc_draws=1000, seed=0,
        )
        m = metrics(est, band, truth, grid)
        assert m.imse == pytest.approx((0 + 0 + 0 + 4.0) / 4 * 3.0)
        assert m.pointwise_coverage == pytest.approx(0.75)
        assert m.pointwise_width == pytest.approx(1.0)
        assert m.joint_covered is False
        assert m.joint_width == pytest.approx(2.0)

    def test_length_mismatch(self):
        grid = SamplingGrid(np.array([0.0, 1.0]))
        with pytest.raises(ValueError, match="lengths"):
            metrics(np.zeros(3), None, np.zeros(3), grid)


FAST_CFG = SolverConfig(chain_length=500, burn_in=100)


def tiny_scenario():
    return continuous_scenario(n=40, t=8)


class TestRunStudy:
    def test_bookkeeping(self):
        report = run_study(tiny_scenario(), methods=("li", "spline2"), taus=(0.5,),
                           replicates=2, seed=4, mc_draws=1000,
                           solver_config=FAST_CFG)
        assert report.failures == 0
        assert report.replicates == 2
        # 2 methods x 1 tau x 2 coefficients
        assert len(report.rows) == 4
        assert all(r.replicates == 2 for r in report.rows)
        assert len(report.raw) == 8

    def test_identical_replicates_have_zero_se(self, monkeypatch):
        monkeypatch.setattr(simlab, "replicate_seed", lambda seed, rep: 12345)
        report = run_study(tiny_scenario(), methods=("li",), taus=(0.5,),
                           replicates=3, seed=4, mc_draws=1000,
                           solver_config=FAST_CFG)
        for row in report.rows:
            assert row.imse_se == 0.0
            assert row.joint_coverage_se == 0.0

    def test_parallel_matches_serial(self):
        kwargs = dict(methods=("li",), taus=(0.5,), replicates=3, seed=11,
                      mc_draws=1000, solver_config=FAST_CFG)
        r1 = run_study(tiny_scenario(), parallelism=1, **kwargs)
        r2 = run_study(tiny_scenario(), parallelism=2, **kwargs)
        assert r1.rows == r2.rows
        assert r1.raw == r2.raw

    def test_csv_outputs(self, tmp_path):
        report = run_study(tiny_scenario(), methods=("li",), taus=(0.5,),
                           replicates=2, seed=2, mc_draws=1000,
                           solver_config=FAST_CFG)
        report.write_csv(tmp_path / "rows.csv")
        report.write_raw_csv(tmp_path / "raw.csv")
        rows = (tmp_path / "rows.csv").read_text().strip().splitlines()
        raw = (tmp_path / "raw.csv").read_text().strip().splitlines()
        assert rows[0].startswith("method,tau,coefficient")
        assert len(rows) == 1 + len(report.rows)
        assert len(raw) == 1 + len(report.raw)

    def test_too_few_replicates(self):
        with pytest.raises(ValueError, match="replicates"):
            run_study(tiny_scenario(), ("li",), (0.5,), replicates=1, seed=0)

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="method"):
            run_study(tiny_scenario(), ("magic",), (0.5,), replicates=2, seed=0)
