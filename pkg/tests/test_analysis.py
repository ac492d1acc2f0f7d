"""Bound formulas against frozen scalar oracles, plus estimator sanity."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sgdflow.analysis import (BoundReport, MeanSqDistTo, MeanSqSigmaDist,
                              QuarticFormReport, SlicedW2Vs, TailVerdict,
                              bound_ergodic_average,
                              bound_invariant_second_moment,
                              bound_nonparametric_noiseless,
                              bound_parametric_noiseless,
                              bound_parametric_noiseless_loose,
                              bound_stepsize_decay, bound_w2_noisy,
                              build_bound_report, hill_sweep, hill_tail_index,
                              nonparametric_envelope, quartic_form_constant,
                              tail_report, violations_from_columns, w2_1d,
                              w2_sliced, w2_sliced_detail)
from sgdflow.dynamics import (DynamicsKind, SimulationPlan, StepSchedule,
                              simulate_ensemble)
from sgdflow.problems import empirical_instance, interpolator, spectral_summary


class TestParametricBound:
    def test_t_zero_gives_initial_distance(self):
        theta0 = np.array([1.0, 2.0])
        star = np.array([0.0, 0.0])
        assert bound_parametric_noiseless(0.0, theta0, star, mu=0.7, K=3.0, gamma=0.05) == 5.0

    def test_gamma_zero_pure_exponential(self):
        theta0 = np.array([2.0])
        star = np.array([0.0])
        val = bound_parametric_noiseless(1.5, theta0, star, mu=0.4, K=9.0, gamma=0.0)
        assert val == pytest.approx(4.0 * math.exp(-0.8 * 1.5), rel=1e-12)

    def test_frozen_scalar_oracle(self):
        theta0 = np.array([2.0, 0.0])
        star = np.zeros(2)
        val = bound_parametric_noiseless(1.0, theta0, star, mu=1.0, K=1.0, gamma=0.1)
        assert val == pytest.approx(0.5982744768905403, rel=1e-12)

    def test_vectorized_over_time(self):
        theta0 = np.array([1.0])
        star = np.array([0.0])
        ts = np.array([0.0, 1.0, 2.0])
        vals = bound_parametric_noiseless(ts, theta0, star, mu=1.0, K=2.0, gamma=0.25)
        assert vals.shape == (3,)
        assert vals[0] == 1.0
        assert np.all(np.diff(vals) < 0)

    def test_loose_companion(self):
        theta0 = np.array([3.0])
        star = np.array([0.0])
        assert bound_parametric_noiseless_loose(0.0, theta0, star, mu=2.0) == 9.0
        assert bound_parametric_noiseless_loose(1.0, theta0, star, mu=2.0) == \
            pytest.approx(9.0 * math.exp(-2.0), rel=1e-12)


class TestNonparametricBound:
    def test_t_zero_gives_initial_distance(self):
        theta0 = np.array([3.0, 4.0])
        star = np.zeros(2)
        val = bound_nonparametric_noiseless(0.0, 0.5, theta0, star, np.eye(2),
                                            K_alpha=2.0, K=1.0, gamma=0.1)
        assert val == pytest.approx(25.0, rel=1e-12)

    def test_identity_sigma_closed_form(self):
        theta0 = np.array([3.0, 4.0])
        star = np.zeros(2)
        val = bound_nonparametric_noiseless(3.0, 0.5, theta0, star, np.eye(2),
                                            K_alpha=2.0, K=1.0, gamma=0.1)
        assert val == pytest.approx(13.4482823889372, rel=1e-10)

    def test_kernel_component_rejected(self):
        Sigma = np.diag([1.0, 0.0])
        theta0 = np.array([1.0, 0.5])
        with pytest.raises(ValueError, match="range"):
            bound_nonparametric_noiseless(1.0, 1.0, theta0, np.zeros(2), Sigma,
                                          K_alpha=1.0, K=1.0, gamma=0.1)

    def test_negligible_kernel_component_tolerated(self):
        Sigma = np.diag([1.0, 0.0])
        theta0 = np.array([1.0, 1e-10])
        val = bound_nonparametric_noiseless(1.0, 1.0, theta0, np.zeros(2), Sigma,
                                            K_alpha=1.0, K=1.0, gamma=0.1)
        assert val > 0

    def test_alpha_must_be_positive(self):
        with pytest.raises(ValueError):
            bound_nonparametric_noiseless(1.0, 0.0, np.ones(2), np.zeros(2),
                                          np.eye(2), K_alpha=1.0, K=1.0, gamma=0.1)

    def test_envelope_below_each_curve(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((30, 6))
        theta_true = rng.standard_normal(6)
        inst = empirical_instance(X, X @ theta_true, theta0=np.zeros(6), gamma=0.01)
        summ = spectral_summary(inst)
        star = interpolator(inst)
        ts = np.linspace(0.0, 20.0, 40)
        env = nonparametric_envelope(ts, inst.theta0, star, summ.Sigma,
                                     summ.k_alpha, summ.K, inst.gamma)
        for a in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0):
            curve = bound_nonparametric_noiseless(ts, a, inst.theta0, star, summ.Sigma,
                                                  summ.k_alpha[a], summ.K, inst.gamma)
            assert np.all(env <= curve + 1e-12)

    def test_monotone_decreasing(self):
        theta0 = np.array([1.0, -2.0, 0.5])
        ts = np.linspace(0.0, 50.0, 60)
        vals = bound_nonparametric_noiseless(ts, 2.0, theta0, np.zeros(3), np.eye(3),
                                             K_alpha=3.0, K=2.0, gamma=0.05)
        assert np.all(np.diff(vals) < 0)


class TestScalarBounds:
    def test_w2_t_zero_and_gamma_zero(self):
        assert bound_w2_noisy(0.0, 3.0, mu=0.5, K=2.0, gamma=0.1) == 3.0
        assert bound_w2_noisy(2.0, 3.0, mu=0.5, K=2.0, gamma=0.0) == \
            pytest.approx(3.0 * math.exp(-2.0), rel=1e-12)

    def test_w2_frozen_oracle(self):
        # mu=0.5, gamma K = 0.1 -> rate 2*0.5*(1 - 0.2) = 0.8, t=2
        val = bound_w2_noisy(2.0, 1.0, mu=0.5, K=1.0, gamma=0.1)
        assert val == pytest.approx(0.20189651799465538, rel=1e-12)

    def test_w2_companion_constant(self):
        val = bound_w2_noisy(1.0, 1.0, mu=0.5, K=1.0, gamma=0.1, c=1.0)
        assert val == pytest.approx(math.exp(-2.0 * 0.5 * 0.9), rel=1e-12)

    def test_localization_zero_noise(self):
        assert bound_invariant_second_moment(0.01, 10.0, 0.0, 0.5) == 0.0

    def test_localization_frozen_oracle(self):
        val = bound_invariant_second_moment(0.01, 10.0, 1.0, 0.5)
        assert val == pytest.approx(0.22222222222222224, rel=1e-12)

    def test_localization_rejects_gamma_K_at_one(self):
        with pytest.raises(ValueError):
            bound_invariant_second_moment(0.1, 10.0, 1.0, 0.5)

    def test_ergodic_frozen_oracle(self):
        assert bound_ergodic_average(100.0, 0.01, 10.0, 1.0, 4.0) == pytest.approx(0.012, rel=1e-12)

    def test_ergodic_noiseless_large_t(self):
        val = bound_ergodic_average(1000.0, 0.01, 10.0, 0.0, 4.0)
        assert val == pytest.approx(10.0 * 4.0 / 1000.0 ** 2, rel=1e-12)

    def test_ergodic_rejects_nonpositive_t(self):
        with pytest.raises(ValueError):
            bound_ergodic_average(0.0, 0.01, 10.0, 1.0, 4.0)

    def test_decay_zero_sources(self):
        assert bound_stepsize_decay(5.0, 2.0, 1.0, 1.0, 0.0, 0.0) == 0.0

    def test_decay_power_law_halving(self):
        a = bound_stepsize_decay(4.0, 3.0, 1.0, 1.0, 1.0, 1.0)
        b = bound_stepsize_decay(8.0, 3.0, 1.0, 1.0, 1.0, 1.0)
        assert a / b == pytest.approx(2.0 ** 2, rel=1e-12)

    def test_decay_frozen_oracle(self):
        val = bound_stepsize_decay(10.0, 2.0, 1.0, 1.0, 1.0, 1.0)
        assert val == pytest.approx(1.0901123414128686, rel=1e-12)

    def test_decay_rejects_alpha_at_one(self):
        with pytest.raises(ValueError):
            bound_stepsize_decay(10.0, 1.0, 1.0, 1.0, 1.0, 1.0)


class TestW2OneD:
    def test_identical_samples_zero(self):
        x = np.array([3.0, -1.0, 2.0])
        assert w2_1d(x, x) == 0.0

    def test_translation(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(500)
        assert w2_1d(x, x + 2.5) == pytest.approx(2.5 ** 2, rel=1e-12)

    def test_hand_pairing_oracle(self):
        # sorted pairing (0-2, 1-5) gives 10; the crossed one would give 13
        assert w2_1d([0.0, 1.0], [2.0, 5.0]) == pytest.approx(10.0, rel=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            w2_1d([], [1.0])

    def test_unequal_counts_subsample_deterministic(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal(1000)
        b = rng.standard_normal(400)
        v1 = w2_1d(a, b)
        v2 = w2_1d(a, b)
        assert v1 == v2
        assert v1 == pytest.approx(w2_1d(b, a), rel=1e-12)


class TestW2Sliced:
    def test_self_distance_exactly_zero(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((200, 4))
        assert w2_sliced(a, a, 32, np.random.default_rng(7)) == 0.0

    def test_symmetric_under_equal_seeds(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((150, 3))
        b = rng.standard_normal((150, 3)) + 1.0
        v1 = w2_sliced(a, b, 64, np.random.default_rng(5))
        v2 = w2_sliced(b, a, 64, np.random.default_rng(5))
        assert v1 == pytest.approx(v2, rel=1e-12)

    def test_translation_scaling(self):
        # shifting by v costs <u, v>^2 per direction, averaging to ||v||^2/d
        rng = np.random.default_rng(4)
        d = 6
        a = rng.standard_normal((300, d))
        v = np.array([1.0, -2.0, 0.5, 0.0, 1.5, -1.0])
        val = w2_sliced(a, a + v, 4000, np.random.default_rng(11))
        assert val == pytest.approx(np.sum(v ** 2) / d, rel=0.12)

    def test_equal_covariance_gaussians(self):
        rng = np.random.default_rng(8)
        d = 4
        m1 = np.zeros(d)
        m2 = np.array([1.0, 0.5, -0.5, 2.0])
        a = rng.standard_normal((4000, d)) + m1
        b = rng.standard_normal((4000, d)) + m2
        val = w2_sliced(a, b, 2000, np.random.default_rng(13))
        assert val == pytest.approx(np.sum((m1 - m2) ** 2) / d, rel=0.15)

    def test_detail_matches_mean(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((100, 3))
        b = rng.standard_normal((100, 3))
        per = w2_sliced_detail(a, b, 16, np.random.default_rng(21))
        full = w2_sliced(a, b, 16, np.random.default_rng(21))
        assert per.shape == (16,)
        assert full == pytest.approx(per.mean(), rel=1e-12)

    def test_needs_a_projection(self):
        a = np.zeros((10, 2))
        with pytest.raises(ValueError):
            w2_sliced(a, a, 0, np.random.default_rng(0))


class TestHill:
    def test_pareto_oracle(self):
        rng = np.random.default_rng(901)
        samples = rng.uniform(size=100000) ** (-1.0 / 2.0)
        val = hill_tail_index(samples, 1000)
        assert 1.8 <= val <= 2.2

    def test_default_k_is_root_of_count(self):
        rng = np.random.default_rng(901)
        samples = rng.uniform(size=100000) ** (-1.0 / 2.0)
        assert hill_tail_index(samples) == pytest.approx(hill_tail_index(samples, 316), rel=1e-12)

    def test_exponential_reads_light(self):
        samples = np.random.default_rng(77).exponential(size=100000)
        assert hill_tail_index(samples, 100) > 5.0

    def test_constant_sample_rejected(self):
        with pytest.raises(ValueError):
            hill_tail_index(np.full(100, 3.0), 10)

    def test_too_few_distinct_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            hill_tail_index(np.array([1.0, 2.0, 3.0, 3.0, 3.0, 3.0]), 3)

    def test_k_bounds(self):
        x = np.arange(1.0, 11.0)
        with pytest.raises(ValueError):
            hill_tail_index(x, 10)
        with pytest.raises(ValueError):
            hill_tail_index(x, 0)

    def test_sweep_on_pareto(self):
        rng = np.random.default_rng(901)
        samples = rng.uniform(size=100000) ** (-1.0 / 2.0)
        sweep = hill_sweep(samples)
        assert len(sweep) >= 3
        assert all(1.5 <= v <= 2.6 for v in sweep.values())


class TestTailReport:
    def test_light_tail_on_gaussian_norms(self):
        g = np.random.default_rng(5150).standard_normal((5000, 10))
        rep = tail_report(np.linalg.norm(g, axis=1), gamma=0.01)
        assert rep.verdict is TailVerdict.LIGHT_TAIL
        assert all(v > 0 for v in rep.hill_indices.values())
        assert set(rep.moment_growth) == {2.0, 4.0, 8.0}

    def test_heavy_tail_on_pareto(self):
        samples = np.random.default_rng(1).uniform(size=5000) ** (-1.0 / 1.2)
        rep = tail_report(samples, gamma=0.5)
        assert rep.verdict is TailVerdict.HEAVY_TAIL_SUSPECTED
        top = rep.moment_growth[8.0]
        assert top[-1] > 2.0 * top[len(top) // 2]

    def test_moment_counts_increasing(self):
        samples = np.random.default_rng(3).exponential(size=2000)
        rep = tail_report(samples, gamma=0.1)
        for seq in rep.moment_growth.values():
            assert seq.ndim == 1 and seq.size >= 2

    def test_tiny_sample_rejected(self):
        with pytest.raises(ValueError):
            tail_report(np.ones(4), gamma=0.1)


class TestQuartic:
    def _instance(self, n, d, seed=0, noisy=True):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, d))
        theta_true = rng.standard_normal(d)
        y = X @ theta_true + (0.3 * rng.standard_normal(n) if noisy else 0.0)
        inst = empirical_instance(X, y, theta0=np.zeros(d), gamma=0.01)
        return inst, interpolator(inst)

    def test_positive_on_generic_instance(self):
        inst, star = self._instance(80, 10, seed=5)
        rep = quartic_form_constant(inst.X, inst.y, star, probes=2000,
                                    rng=np.random.default_rng(0))
        assert rep.c_hat > 0
        assert rep.argmin_eta.shape == (10,)
        assert rep.probes == 5 * (2000 + 600)

    def test_rejects_underdetermined(self):
        inst, star = self._instance(12, 10, seed=1)
        with pytest.raises(ValueError, match="2d"):
            quartic_form_constant(inst.X, inst.y, star, probes=10,
                                  rng=np.random.default_rng(0))

    def test_zero_design_all_probes_skipped(self):
        X = np.zeros((4, 1))
        with pytest.raises(ValueError, match="kernel"):
            quartic_form_constant(X, np.zeros(4), np.zeros(1), probes=10,
                                  rng=np.random.default_rng(0))

    def test_hand_instance_matches_grid_oracle(self):
        X = np.array([[1.0], [2.0], [-1.0], [0.5]])
        rng = np.random.default_rng(12)
        y = X[:, 0] * 1.3 + 0.2 * rng.standard_normal(4)
        theta_star = np.linalg.lstsq(X, y, rcond=None)[0]
        base = X @ theta_star - y
        best = np.inf
        for s in (1.0, -1.0):
            for rho in (1e-2, 1e-1, 1.0, 1e1, 1e2):
                eta = np.array([s * rho])
                v = X @ eta
                r = v + base
                R = np.diag(r) - np.outer(r, np.ones(4)) / 4.0
                num = float(v @ (R @ (R.T @ v)))
                den = float(eta @ eta) * float(v @ v)
                best = min(best, num / den)
        rep = quartic_form_constant(X, y, theta_star, probes=50,
                                    rng=np.random.default_rng(3))
        assert rep.c_hat == pytest.approx(best, abs=1e-3 * abs(best))

    def test_stability_under_probe_doubling(self):
        inst, star = self._instance(80, 10, seed=9)
        r1 = quartic_form_constant(inst.X, inst.y, star, probes=1000,
                                   rng=np.random.default_rng(100))
        r2 = quartic_form_constant(inst.X, inst.y, star, probes=2000,
                                   rng=np.random.default_rng(200))
        assert abs(r1.c_hat - r2.c_hat) < 0.2 * max(r1.c_hat, r2.c_hat)


class TestViolationsAndReports:
    def test_violation_rule(self):
        emp = np.array([1.0, 1.0, 1.0])
        se = np.array([0.1, 0.1, 0.1])
        bound = np.array([2.0, 0.65, 0.5])
        assert violations_from_columns(emp, se, bound) == 2

    def test_exact_tie_not_a_violation(self):
        emp = np.array([4.0])
        se = np.array([0.0])
        bound = np.array([4.0])
        assert violations_from_columns(emp, se, bound) == 0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            violations_from_columns(np.ones(3), np.ones(3), np.ones(2))

    def test_report_column_lengths_checked(self):
        with pytest.raises(ValueError):
            BoundReport(times=np.zeros(3), empirical=np.zeros(3), stderr=np.zeros(3),
                        bound=np.zeros(2), violations=0, label="x")

    def _flow_ensemble(self, time_averages=False):
        rng = np.random.default_rng(19)
        n, d = 20, 4
        X = rng.standard_normal((n, d))
        theta_true = rng.standard_normal(d)
        inst = empirical_instance(X, X @ theta_true, theta0=rng.standard_normal(d),
                                  gamma=0.3 / (3.0 * float(np.max(np.sum(X ** 2, axis=1)))))
        plan = SimulationPlan(t_end=5.0, ensemble_size=8, seed=0, dt=0.005,
                              save_stride=100, time_averages=time_averages,
                              dynamics=DynamicsKind.SDE_EMPIRICAL)
        ens = simulate_ensemble(inst, plan, StepSchedule.constant(0.0))
        return inst, ens

    def test_deterministic_flow_zero_violations(self):
        inst, ens = self._flow_ensemble()
        summ = spectral_summary(inst)
        star = interpolator(inst)
        report = build_bound_report(
            ens,
            lambda ts: bound_parametric_noiseless(ts, inst.theta0, star, summ.mu,
                                                  summ.K, inst.gamma),
            MeanSqDistTo(ref=star))
        assert report.violations == 0
        assert report.label == "mean_sq_dist"
        assert report.times.size == report.bound.size

    def test_zero_bound_flags_everything_after_start(self):
        inst, ens = self._flow_ensemble()
        star = interpolator(inst)
        report = build_bound_report(ens, lambda ts: np.zeros_like(ts),
                                    MeanSqDistTo(ref=star), label="sanity")
        assert report.violations == report.times.size
        assert report.label == "sanity"

    def test_sigma_statistic_needs_time_averages(self):
        inst, ens = self._flow_ensemble(time_averages=False)
        Sigma = inst.X.T @ inst.X / inst.n
        stat = MeanSqSigmaDist(Sigma=Sigma, ref=interpolator(inst))
        with pytest.raises(ValueError, match="time averages"):
            stat(ens)

    def test_sigma_statistic_on_averages(self):
        inst, ens = self._flow_ensemble(time_averages=True)
        Sigma = inst.X.T @ inst.X / inst.n
        star = interpolator(inst)
        emp, se = MeanSqSigmaDist(Sigma=Sigma, ref=star)(ens)
        assert emp.shape == ens.times.shape
        assert np.all(emp >= 0)
        assert np.all(np.diff(emp[1:]) < 0)  # averages close in on theta_star

    def test_sliced_statistic_self_reference_final_zero(self):
        inst, ens = self._flow_ensemble()
        stat = SlicedW2Vs(reference=ens.states[:, -1, :], projections=16, seed=4)
        emp, se = stat(ens)
        assert emp[-1] == 0.0
        assert emp[0] > 0.0
