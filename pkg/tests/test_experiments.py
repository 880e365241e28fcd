import numpy as np
import pytest
from scipy import integrate, stats

import smoothot as st
from smoothot import CostSpec, InputError, KernelSpec, OracleUnavailableError, RateParams


def gaussian_rate_config(seed=0, sizes=(50, 100, 200, 400), reps=20, shift=1.0):
    return st.RateExperimentConfig(
        law_mu=st.LawSpec.gaussian([0.0], 1.0),
        law_nu=st.LawSpec.gaussian([shift], 1.0),
        kernel=KernelSpec("gaussian", 1.0),
        cost=CostSpec(2.0),
        sizes=sizes,
        replications=reps,
        rate_params=RateParams(10.0, 2.0, 1),
        seed=st.RngSpec(seed, 0),
        oracle="closed-form-gaussian",
    )


class TestGaussianOracle:
    def test_identical_parameters(self):
        assert st.gaussian_w2_oracle([1.0], [1.0], 2.0, 2.0, 0.7, 1) == 0.0

    def test_equal_variances_reduce_to_mean_term(self):
        for sigma in (0.0, 0.5, 2.0):
            got = st.gaussian_w2_oracle([0.0, 0.0], [3.0, 4.0], 1.0, 1.0, sigma, 2)
            assert got == pytest.approx(25.0, abs=1e-12)

    def test_quantile_coupling_cross_check(self):
        # d=1, means 0 and 2, variances 1 and 4, sigma=0 -> 4 + (1-2)^2 = 5;
        # independent oracle: quantile coupling integral in the z = F^{-1}(u)
        # parametrization, int (q_G(Phi(z)) - z)^2 phi(z) dz
        got = st.gaussian_w2_oracle([0.0], [2.0], 1.0, 4.0, 0.0, 1)

        def integrand(z):
            return (2.0 + 2.0 * z - z) ** 2 * stats.norm.pdf(z)

        reference, err = integrate.quad(integrand, -12, 12)
        assert err < 1e-8
        assert got == pytest.approx(5.0, abs=1e-12)
        assert got == pytest.approx(reference, abs=1e-6)

    def test_invalid_inputs(self):
        with pytest.raises(InputError):
            st.gaussian_w2_oracle([0.0], [0.0], -1.0, 1.0, 1.0, 1)
        with pytest.raises(InputError):
            st.gaussian_w2_oracle([0.0, 0.0], [0.0], 1.0, 1.0, 1.0, 1)


class TestRateExperiment:
    def test_gaussian_smoke_slope(self):
        res = st.run_rate_experiment(gaussian_rate_config())
        assert len(res.table) == 4
        assert -0.85 < res.fitted_slope < -0.2
        assert res.predicted_slope == -0.5
        assert np.isfinite(res.slope_se)
        assert res.oracle_value == pytest.approx(1.0)
        for row in res.table:
            assert row.predicted_rate == st.rho(RateParams(10.0, 2.0, 1), row.n)

    def test_exact_reproducibility(self):
        a = st.run_rate_experiment(gaussian_rate_config(seed=3))
        b = st.run_rate_experiment(gaussian_rate_config(seed=3), threads=4)
        assert a == b

    def test_doubling_replications_keeps_slope(self):
        # shared replication streams: the first 20 replications are identical
        # draws, so doubling only perturbs the per-size means slightly
        sizes = (100, 200, 400, 800, 1600)
        a = st.run_rate_experiment(gaussian_rate_config(seed=0, reps=20, sizes=sizes))
        b = st.run_rate_experiment(gaussian_rate_config(seed=0, reps=40, sizes=sizes))
        assert abs(b.fitted_slope - a.fitted_slope) <= a.slope_se

    def test_reference_oracle_fields(self):
        cfg = st.RateExperimentConfig(
            law_mu=st.LawSpec.pareto_radial(3.0, dim=1),
            law_nu=st.LawSpec.pareto_radial(3.0, dim=1, shift=[1.0]),
            kernel=KernelSpec("gaussian", 1.0),
            cost=CostSpec(1.0),
            sizes=(50, 100, 200, 400),
            replications=20,
            rate_params=RateParams(2.0, 1.0, 1),
            seed=st.RngSpec(6, 0),
            oracle="large-sample-reference",
            n_ref_multiplier=64,
        )
        res = st.run_rate_experiment(cfg)
        assert res.reference_error is not None and res.reference_error >= 0.0
        assert res.oracle_value > 0.0
        assert not res.reference_flagged

    def test_laplace_kernel_runs_with_reference_oracle(self):
        cfg = st.RateExperimentConfig(
            law_mu=st.LawSpec.gaussian([0.0], 1.0),
            law_nu=st.LawSpec.gaussian([1.0], 1.0),
            kernel=KernelSpec("laplace-product", 1.0),
            cost=CostSpec(2.0),
            sizes=(50, 100, 200, 400),
            replications=20,
            rate_params=RateParams(10.0, 2.0, 1),
            seed=st.RngSpec(8, 0),
            oracle="large-sample-reference",
        )
        res = st.run_rate_experiment(cfg)
        assert np.isfinite(res.fitted_slope)
        assert res.oracle_value > 0

    def test_laplace_kernel_refused_by_closed_form_oracle(self):
        cfg = gaussian_rate_config()
        bad = st.RateExperimentConfig(
            law_mu=cfg.law_mu, law_nu=cfg.law_nu,
            kernel=KernelSpec("laplace-product", 1.0), cost=cfg.cost,
            sizes=cfg.sizes, replications=cfg.replications,
            rate_params=cfg.rate_params, seed=cfg.seed,
            oracle="closed-form-gaussian")
        with pytest.raises(OracleUnavailableError):
            st.run_rate_experiment(bad)

    def test_closed_form_requires_gaussian_design(self):
        cfg = gaussian_rate_config()
        bad = st.RateExperimentConfig(
            law_mu=st.LawSpec.pareto_radial(3.0, dim=1), law_nu=cfg.law_nu,
            kernel=cfg.kernel, cost=cfg.cost, sizes=cfg.sizes,
            replications=cfg.replications, rate_params=cfg.rate_params,
            seed=cfg.seed, oracle="closed-form-gaussian")
        with pytest.raises(OracleUnavailableError):
            st.run_rate_experiment(bad)

    def test_config_validation(self):
        with pytest.raises(InputError):
            gaussian_rate_config(sizes=(100, 50, 200, 400))
        with pytest.raises(InputError):
            gaussian_rate_config(sizes=(50, 100, 200))
        with pytest.raises(InputError):
            gaussian_rate_config(reps=5)

    def test_boundary_regime_reports_both_fits(self):
        # q = d + 2p sits on the threshold: both candidate fits are reported
        cfg = st.RateExperimentConfig(
            law_mu=st.LawSpec.gaussian([0.0], 1.0),
            law_nu=st.LawSpec.gaussian([1.0], 1.0),
            kernel=KernelSpec("gaussian", 1.0),
            cost=CostSpec(2.0),
            sizes=(50, 100, 200, 400),
            replications=20,
            rate_params=RateParams(5.0, 2.0, 1),
            seed=st.RngSpec(12, 0),
            oracle="closed-form-gaussian",
        )
        res = st.run_rate_experiment(cfg)
        assert res.boundary_regime
        assert res.predicted_slope == -0.5
        assert res.boundary_logcorrected_slope is not None
        assert np.isfinite(res.boundary_logcorrected_slope)
        for row in res.table:
            assert row.predicted_rate == np.log(row.n) / np.sqrt(row.n)

    def test_regime_ordering_for_sub_second_moment_tails(self):
        # heavier tail -> shallower fitted slope, median over 5 seeds; the
        # sub-parametric regime requires tail index below 2p
        def design(alpha, q, seed):
            return st.RateExperimentConfig(
                law_mu=st.LawSpec.pareto_radial(alpha, dim=1),
                law_nu=st.LawSpec.pareto_radial(alpha, dim=1, shift=[1.0]),
                kernel=KernelSpec("gaussian", 1.0),
                cost=CostSpec(1.0),
                sizes=(100, 200, 400, 800, 1600),
                replications=30,
                rate_params=RateParams(q, 1.0, 1),
                seed=st.RngSpec(seed, 0),
                oracle="large-sample-reference",
            )

        med = {}
        for alpha, q in ((1.3, 1.2), (1.8, 1.7)):
            slopes = [st.run_rate_experiment(design(alpha, q, 40 + s)).fitted_slope
                      for s in range(5)]
            med[alpha] = float(np.median(slopes))
        assert med[1.3] > med[1.8]
        assert med[1.8] > -0.5


class TestCltExperiment:
    def make_config(self, seed=9, reps=60, m=300):
        return st.CltExperimentConfig(
            law_mu=st.LawSpec.gaussian([0.0], 1.0),
            law_nu=st.LawSpec.gaussian([2.0], 1.0),
            kernel=KernelSpec("gaussian", 0.5),
            cost=CostSpec(2.0),
            m=m, n=m, replications=reps, alpha=0.05, k=2, k_eval=64,
            seed=st.RngSpec(seed, 0),
        )

    def test_smoke_coverage_and_rows(self):
        res = st.run_clt_experiment(self.make_config())
        assert res.oracle_value == pytest.approx(4.0)
        assert 0.80 <= res.coverage_cost <= 1.0
        assert 0.80 <= res.coverage_dist <= 1.0
        assert res.ks_distance < 0.2
        assert len(res.rows) == 60
        assert res.median_tau2 > 0
        assert res.empirical_variance / res.median_tau2 < 2.0

    def test_thread_determinism(self):
        cfg = self.make_config(seed=10, reps=24)
        assert st.run_clt_experiment(cfg, threads=1) == st.run_clt_experiment(cfg, threads=3)

    def test_asymmetric_sizes_and_variances(self):
        # unequal m, n and unequal variances exercise the size weighting of
        # the variance combination; a flipped weighting shows up as a
        # mismatch between the empirical and estimated variances
        cfg = st.CltExperimentConfig(
            law_mu=st.LawSpec.gaussian([0.0], 1.0),
            law_nu=st.LawSpec.gaussian([3.0], 4.0),
            kernel=KernelSpec("gaussian", 0.5),
            cost=CostSpec(2.0),
            m=1200, n=400, replications=100, alpha=0.05, k=2, k_eval=96,
            seed=st.RngSpec(777, 0),
        )
        res = st.run_clt_experiment(cfg, threads=2)
        assert 0.85 <= res.coverage_cost <= 1.0
        assert 0.85 <= res.coverage_dist <= 1.0
        assert 0.6 <= res.empirical_variance / res.median_tau2 <= 1.6

    def test_needs_separated_design(self):
        cfg = st.CltExperimentConfig(
            law_mu=st.LawSpec.gaussian([0.0], 1.0),
            law_nu=st.LawSpec.gaussian([0.0], 1.0),
            kernel=KernelSpec("gaussian", 0.5),
            cost=CostSpec(2.0), m=100, n=100, replications=10,
            seed=st.RngSpec(0, 0))
        with pytest.raises(OracleUnavailableError):
            st.run_clt_experiment(cfg)


class TestSigmaSweep:
    def test_identical_reuse_paired_exact_zero(self):
        cfg = st.SigmaSweepConfig(
            law_mu=st.LawSpec.gaussian([0.0], 1.0), law_nu=None,
            sigmas=(0.25, 0.5, 1.0, 2.0), cost=CostSpec(2.0),
            m=100, n=100, k=2, paired=True, seed=st.RngSpec(1, 0))
        rows = st.run_sigma_sweep(cfg)
        assert [r.sigma for r in rows] == [0.25, 0.5, 1.0, 2.0]
        for r in rows:
            assert r.t_hat == 0.0

    def test_tracks_oracle_and_bandwidth_invariance(self):
        cfg = st.SigmaSweepConfig(
            law_mu=st.LawSpec.gaussian([0.0], 1.0),
            law_nu=st.LawSpec.gaussian([1.0], 1.0),
            sigmas=(0.5, 1.0, 2.0), cost=CostSpec(2.0),
            m=2000, n=2000, k=1, seed=st.RngSpec(2, 0))
        rows = st.run_sigma_sweep(cfg)
        # equal input variances: oracle = |v|^2 = 1 at every bandwidth
        for r in rows:
            assert abs(r.t_hat - 1.0) < 0.4
            assert r.tau2 > 0 and r.seed_spread >= 0
        assert max(r.t_hat for r in rows) - min(r.t_hat for r in rows) < 0.5

    def test_grid_validation(self):
        with pytest.raises(InputError):
            st.SigmaSweepConfig(law_mu=st.LawSpec.gaussian([0.0], 1.0), law_nu=None,
                                sigmas=(1.0, 0.5), cost=CostSpec(2.0), m=10, n=10)


class TestCsvWriters:
    def test_rate_schema(self, tmp_path):
        res = st.run_rate_experiment(gaussian_rate_config())
        out = tmp_path / "rate.csv"
        st.write_rate_csv(res, out, header_comments=["hello"])
        lines = out.read_text().splitlines()
        assert lines[0] == "# hello"
        assert lines[1] == "N,mean_abs_error,mc_se,predicted_rate,replications"
        assert len(lines) == 2 + len(res.table)

    def test_clt_schema(self, tmp_path):
        cfg = TestCltExperiment().make_config(seed=11, reps=12)
        res = st.run_clt_experiment(cfg)
        out = tmp_path / "clt.csv"
        st.write_clt_csv(res, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "replication,t_hat,tau2,standardized,covered_cost,covered_dist"
        assert len(lines) == 1 + 12

    def test_sigma_schema(self, tmp_path):
        cfg = st.SigmaSweepConfig(
            law_mu=st.LawSpec.gaussian([0.0], 1.0), law_nu=None,
            sigmas=(0.5, 1.0), cost=CostSpec(2.0), m=50, n=50,
            paired=True, seed=st.RngSpec(3, 0))
        rows = st.run_sigma_sweep(cfg)
        out = tmp_path / "sweep.csv"
        st.write_sigma_csv(rows, out)
        assert out.read_text().splitlines()[0] == "sigma,t_hat,tau2,seed_spread"
