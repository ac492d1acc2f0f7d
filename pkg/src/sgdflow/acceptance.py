"""End-to-end acceptance suite for the simulators and the bound functions.

Thirteen checks exercise the full stack on a handful of canonical instances:
a noiseless overparametrized design, a spiked noisy design, a small
covariance-check design, a decaying-step design, and a population model.
Every pass threshold is computed from the measured spectral summary of the
generated instance (mu, K, the loss floor), never from the design targets,
so the checks stay self-contained if the frozen seeds change.

Each criterion function returns a CriterionResult; run_all executes them in
order. The tamper knob scales every theoretical bound before comparison and
exists purely as a sanity inversion for the harness: at tamper=0.5 the suite
must fail.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .analysis import (
    MeanSqDistTo,
    MeanSqSigmaDist,
    bound_ergodic_average,
    bound_invariant_second_moment,
    bound_parametric_noiseless,
    bound_stepsize_decay,
    hill_tail_index,
    nonparametric_envelope,
    quartic_form_constant,
    tail_report,
    violations_from_columns,
    w2_sliced,
    w2_sliced_detail,
)
from .datagen import GeneratorSpec, NoiseModel, Spectrum, generate_empirical, generate_population
from .dynamics import DynamicsKind, SimulationPlan, StepSchedule, simulate_ensemble, generator_apply_quadratic
from .noise import noise_covariance_report
from .problems import classify_regime, empirical_instance, interpolator, population_instance, spectral_summary

__all__ = [
    "CriterionResult",
    "run_all",
    "format_result",
    "CRITERION_NUMBERS",
]

# Frozen instance seeds. The checks recompute every constant from the
# realized data, so these are reproducibility anchors, not tuning knobs.
_SEED_FIG1 = 20240811
_SEED_NOISY = 411
_SEED_COV = 77
_SEED_DECAY = 88
_SEED_OVER = 923
_SEED_POP = 909


@dataclass(frozen=True)
class CriterionResult:
    """One acceptance check: its verdict plus a human-readable metric line."""

    number: int
    name: str
    passed: bool
    detail: str
    runtime_seconds: float


def format_result(r: CriterionResult) -> str:
    word = "PASS" if r.passed else "FAIL"
    return f"criterion {r.number:02d} {word} {r.name}: {r.detail} [{r.runtime_seconds:.1f}s]"


def _finish(number, name, start, passed, detail) -> CriterionResult:
    return CriterionResult(number=number, name=name, passed=bool(passed), detail=detail,
                           runtime_seconds=time.perf_counter() - start)


# ---------------------------------------------------------------------------
# canonical instances and cached ensembles


@lru_cache(maxsize=None)
def fig1_instance():
    """Noiseless overparametrized design: n=100, d=200, power-law spectrum."""
    spec = GeneratorSpec(n=100, d=200, spectrum=Spectrum.power_law(0.75),
                         noise_model=NoiseModel.interpolating(), seed=_SEED_FIG1)
    return generate_empirical(spec, gamma_fraction=0.5)


@lru_cache(maxsize=None)
def _fig1_parts():
    inst = fig1_instance()
    summary = spectral_summary(inst)
    star = interpolator(inst)
    mu_eff = summary.mu * (2.0 - summary.K * inst.gamma)
    t_end = 50.0 / mu_eff
    dt = 0.05
    saves = (0.0,) + tuple(np.geomspace(5.0 * dt, t_end, 120))
    plan = SimulationPlan(t_end=t_end, ensemble_size=256, seed=101,
                          dynamics=DynamicsKind.SDE_EMPIRICAL, dt=dt, save_times=saves)
    t0 = time.perf_counter()
    ens = simulate_ensemble(inst, plan)
    build_seconds = time.perf_counter() - t0
    return inst, summary, star, ens, build_seconds


def _fig1_bounds(times):
    inst, summary, star, _, _ = _fig1_parts()
    par = bound_parametric_noiseless(times, inst.theta0, star, summary.mu, summary.K, inst.gamma)
    env = nonparametric_envelope(times, inst.theta0, star, summary.Sigma,
                                 summary.k_alpha, summary.K, inst.gamma)
    return np.minimum(par, env), np.asarray(env, dtype=float)


@lru_cache(maxsize=None)
def noisy_instance():
    """Spiked noisy design: n=80, d=10, eigenvalues {1.0, 0.15 x 9}, label noise."""
    spec = GeneratorSpec(n=80, d=10, spectrum=Spectrum.explicit((1.0,) + (0.15,) * 9),
                         noise_model=NoiseModel.additive(0.125), seed=_SEED_NOISY)
    return generate_empirical(spec, gamma_fraction=0.3)


@lru_cache(maxsize=None)
def _noisy_parts():
    inst = noisy_instance()
    summary = spectral_summary(inst)
    star = interpolator(inst)
    floor = classify_regime(inst).sigma_sq_floor
    t_end = 20.0 / summary.mu
    saves = (0.0,) + tuple(np.geomspace(t_end / 50.0, t_end, 10))
    plan = SimulationPlan(t_end=t_end, ensemble_size=2048, seed=202,
                          dynamics=DynamicsKind.SDE_EMPIRICAL, dt=0.03,
                          save_times=saves, time_averages=True)
    ens = simulate_ensemble(inst, plan)
    return inst, summary, star, floor, ens


@lru_cache(maxsize=None)
def small_instance():
    """Small noisy design for covariance and generator checks: n=20, d=5."""
    spec = GeneratorSpec(n=20, d=5, spectrum=Spectrum.power_law(1.0),
                         noise_model=NoiseModel.additive(0.25), seed=_SEED_COV)
    return generate_empirical(spec, gamma_fraction=0.3)


@lru_cache(maxsize=None)
def _overparam_noisy_ensemble():
    spec = GeneratorSpec(n=30, d=60, spectrum=Spectrum.power_law(1.0),
                         noise_model=NoiseModel.additive(0.25), seed=_SEED_OVER)
    inst = generate_empirical(spec, gamma_fraction=0.3)
    plan = SimulationPlan(t_end=50.0, ensemble_size=64, seed=404,
                          dynamics=DynamicsKind.SDE_EMPIRICAL, dt=0.02, save_stride=100)
    return inst, simulate_ensemble(inst, plan)


@lru_cache(maxsize=None)
def _decay_parts():
    spec = GeneratorSpec(n=80, d=10, spectrum=Spectrum.power_law(2.0),
                         noise_model=NoiseModel.additive(0.005), seed=_SEED_DECAY)
    base = generate_empirical(spec, gamma_fraction=0.3)
    summary = spectral_summary(base)
    star = interpolator(base)
    # offset spread across the eigenbasis so the decay curve is polynomial-clean
    weights = np.arange(1, summary.rank + 1, dtype=float) ** -0.75
    v = summary.eigenvectors[:, :summary.rank] @ weights
    theta0 = star + v / np.linalg.norm(v)
    inst = empirical_instance(base.X, base.y, theta0, base.gamma)
    floor = classify_regime(inst).sigma_sq_floor
    schedule = StepSchedule.polynomial_decay(2.0, summary.K)
    saves = (0.0,) + tuple(np.geomspace(0.1, 60.0, 150))
    plan = SimulationPlan(t_end=60.0, ensemble_size=512, seed=808,
                          dynamics=DynamicsKind.SDE_EMPIRICAL, dt=0.02, save_times=saves)
    ens = simulate_ensemble(inst, plan, schedule)
    return inst, summary, star, floor, ens


@lru_cache(maxsize=None)
def _contraction_parts():
    base = noisy_instance()
    summary = spectral_summary(base)
    star = interpolator(base)
    gamma = 0.1 / (3.0 * summary.K)
    u = np.random.default_rng(_SEED_NOISY + 5).standard_normal(base.d)
    u /= np.linalg.norm(u)
    saves = tuple(np.linspace(0.0, 70.0, 36))

    def run(theta0, seed):
        inst = empirical_instance(base.X, base.y, theta0, gamma)
        plan = SimulationPlan(t_end=70.0, ensemble_size=1024, seed=seed,
                              dynamics=DynamicsKind.SDE_EMPIRICAL, dt=0.02, save_times=saves)
        return simulate_ensemble(inst, plan)

    ens_a = run(star + 1.5 * u, 515)
    ens_b = run(star - 0.8 * u, 525)
    return summary, gamma, ens_a, ens_b


@lru_cache(maxsize=None)
def _population_parts():
    spec = GeneratorSpec(n=1000, d=50, spectrum=Spectrum.power_law(1.0),
                         noise_model=NoiseModel.interpolating(), seed=_SEED_POP)
    base = generate_population(spec, gamma_fraction=0.5, n=1000)
    star = base.population_model.theta_star
    u = np.random.default_rng(_SEED_POP + 1).standard_normal(base.d)
    u /= np.linalg.norm(u)
    inst = population_instance(base.population_model, theta0=star + u,
                               gamma=base.gamma, n=base.n)
    summary = spectral_summary(inst)
    mu_eff = summary.mu * (2.0 - summary.K * inst.gamma)
    t_end = 40.0 / mu_eff
    saves = (0.0,) + tuple(np.geomspace(1.0, t_end, 100))
    plan = SimulationPlan(t_end=t_end, ensemble_size=256, seed=910,
                          dynamics=DynamicsKind.SDE_POPULATION, dt=0.05, save_times=saves)
    ens = simulate_ensemble(inst, plan)
    return inst, summary, star, ens


def _offspan_fraction(states, theta0, X):
    """Worst relative component of theta_t - theta0 outside range(X^T)."""
    _, svals, Vt = np.linalg.svd(np.asarray(X, float), full_matrices=False)
    basis = Vt[svals > svals[0] * 1e-12].T
    flat = (states - theta0).reshape(-1, states.shape[-1])
    outside = flat - (flat @ basis) @ basis.T
    num = np.linalg.norm(outside, axis=1)
    den = np.linalg.norm(flat, axis=1)
    keep = den > 0
    if not keep.any():
        return 0.0
    return float(np.max(num[keep] / den[keep]))


# ---------------------------------------------------------------------------
# the thirteen checks


def noiseless_convergence(tamper: float = 1.0) -> CriterionResult:
    """Ensemble mean squared distance stays under min(parametric, polynomial) bound."""
    start = time.perf_counter()
    inst, summary, star, ens, build_seconds = _fig1_parts()
    emp, se = MeanSqDistTo(star)(ens)
    bound, _ = _fig1_bounds(ens.times)
    n_viol = violations_from_columns(emp, se, tamper * bound)
    passed = n_viol == 0 and build_seconds <= 300.0 and ens.n_diverged == 0
    detail = (f"violations {n_viol}/{emp.size}, ensemble build {build_seconds:.1f}s "
              f"(budget 300s), diverged {ens.n_diverged}")
    return _finish(1, "noiseless empirical convergence", start, passed, detail)


def two_regime_shape(tamper: float = 1.0) -> CriterionResult:
    """Early third is polynomial (slope match), late third exponential (log-linear fit)."""
    start = time.perf_counter()
    inst, summary, star, ens, _ = _fig1_parts()
    emp, _ = MeanSqDistTo(star)(ens)
    pos = ens.times > 0
    t, e = ens.times[pos], emp[pos]
    _, env = _fig1_bounds(t)
    third = t.size // 3
    early = slice(0, third)
    late = slice(t.size - third, t.size)
    slope_emp = float(np.polyfit(np.log(t[early]), np.log(e[early]), 1)[0])
    slope_env = float(np.polyfit(np.log(t[early]), np.log(env[early]), 1)[0])
    gap = abs(slope_emp - slope_env)
    log_late = np.log(e[late])
    coef = np.polyfit(t[late], log_late, 1)
    resid = log_late - np.polyval(coef, t[late])
    r_sq = 1.0 - float(resid.var() / log_late.var())
    passed = gap <= 0.5 and r_sq >= 0.95
    detail = (f"early slope {slope_emp:.3f} vs envelope {slope_env:.3f} (gap {gap:.3f}, "
              f"budget 0.5), late log-linear R^2 {r_sq:.4f} (floor 0.95)")
    return _finish(2, "two-regime shape", start, passed, detail)


def noise_covariance_fidelity(tamper: float = 1.0) -> CriterionResult:
    """Sampled SGD noise covariance matches sigma sigma^T at 10 random states."""
    start = time.perf_counter()
    inst = small_instance()
    star = interpolator(inst)
    rng = np.random.default_rng(_SEED_COV + 1)
    worst = 0.0
    for i in range(10):
        theta = star + rng.standard_normal(inst.d)
        rep = noise_covariance_report(inst, theta, draws=100_000, seed=1000 + i)
        worst = max(worst, rep.rel_frobenius_error)
    elapsed = time.perf_counter() - start
    passed = worst <= 0.05 and elapsed <= 60.0
    detail = f"worst rel Frobenius {worst:.4f} (cap 0.05) over 10 states, {elapsed:.1f}s (budget 60s)"
    return _finish(3, "noise covariance fidelity", start, passed, detail)


def span_confinement(tamper: float = 1.0) -> CriterionResult:
    """Empirical-SDE trajectories never leave theta0 + range(X^T)."""
    start = time.perf_counter()
    inst1, _, _, ens1, _ = _fig1_parts()
    frac_clean = _offspan_fraction(ens1.states[ens1.alive], inst1.theta0, inst1.X)
    inst2, ens2 = _overparam_noisy_ensemble()
    frac_over = _offspan_fraction(ens2.states[ens2.alive], inst2.theta0, inst2.X)
    inst3, _, _, _, ens3 = _noisy_parts()
    frac_full = _offspan_fraction(ens3.states[ens3.alive], inst3.theta0, inst3.X)
    worst = max(frac_clean, frac_over, frac_full)
    passed = worst <= 1e-8
    detail = (f"max off-span fraction: noiseless {frac_clean:.2e}, noisy overparam "
              f"{frac_over:.2e}, noisy full-rank {frac_full:.2e} (cap 1e-8)")
    return _finish(4, "span confinement", start, passed, detail)


def invariant_localization(tamper: float = 1.0) -> CriterionResult:
    """Stationary ensemble centered at theta_star with the pinned second moment."""
    start = time.perf_counter()
    inst, summary, star, floor, ens = _noisy_parts()
    final = ens.states[ens.alive, -1, :]
    m = final.shape[0]
    mean = final.mean(axis=0)
    se = final.std(axis=0, ddof=1) / math.sqrt(m)
    worst_z = float(np.max(np.abs(mean - star) / se))
    vals = np.sum((final - star) ** 2, axis=1)
    second = float(vals.mean())
    se_second = float(vals.std(ddof=1)) / math.sqrt(m)
    ceiling = tamper * bound_invariant_second_moment(inst.gamma, summary.K, floor, summary.mu)
    passed = worst_z <= 3.0 and second <= ceiling + 3.0 * se_second
    detail = (f"worst coordinate z {worst_z:.2f} (cap 3), second moment {second:.4f} vs "
              f"ceiling {ceiling:.4f} + 3se {3.0 * se_second:.4f}")
    return _finish(5, "invariant-measure localization", start, passed, detail)


def gaussian_proxy_covariance(tamper: float = 1.0) -> CriterionResult:
    """Gaussian stand-in equilibrates to covariance (gamma sigma^2 / 2) I."""
    start = time.perf_counter()
    inst, summary, star, floor, _ = _noisy_parts()
    t_end = 20.0 / summary.mu
    plan = SimulationPlan(t_end=t_end, ensemble_size=4096, seed=303,
                          dynamics=DynamicsKind.SDE_GAUSSIAN_PROXY, dt=0.03,
                          save_times=(t_end,))
    ens = simulate_ensemble(inst, plan)
    final = ens.states[ens.alive, -1, :]
    cov = np.cov(final.T)
    target = (inst.gamma * floor / 2.0) * np.eye(inst.d)
    rel = float(np.linalg.norm(cov - target) / np.linalg.norm(target))
    passed = rel <= 0.10
    detail = f"stationary covariance rel Frobenius gap {rel:.4f} (cap 0.10), M {final.shape[0]}"
    return _finish(6, "Gaussian proxy covariance", start, passed, detail)


def ergodic_averaging(tamper: float = 1.0) -> CriterionResult:
    """Time-averaged iterates beat the 8 gamma K sigma^2/t + 10 d0^2/t^2 envelope."""
    start = time.perf_counter()
    inst, summary, star, floor, ens = _noisy_parts()
    emp, se = MeanSqSigmaDist(summary.Sigma, star)(ens)
    pos = ens.times > 0
    d0_sq = float(np.sum((inst.theta0 - star) ** 2))
    bound = tamper * bound_ergodic_average(ens.times[pos], inst.gamma, summary.K, floor, d0_sq)
    n_viol = violations_from_columns(emp[pos], se[pos], bound)
    passed = n_viol == 0
    detail = f"violations {n_viol}/{int(pos.sum())} at log-spaced times"
    return _finish(7, "ergodic averaging", start, passed, detail)


def stepsize_decay_rate(tamper: float = 1.0) -> CriterionResult:
    """Polynomially decaying steps give the t^-(alpha-1) law, under its constant."""
    start = time.perf_counter()
    inst, summary, star, floor, ens = _decay_parts()
    emp, se = MeanSqDistTo(star)(ens)
    t = ens.times
    window = t >= 6.0
    slope = float(np.polyfit(np.log(t[window]), np.log(emp[window]), 1)[0])
    pos = t > 0
    d0_sq = float(np.sum((inst.theta0 - star) ** 2))
    bound = tamper * bound_stepsize_decay(t[pos], 2.0, summary.mu, summary.K, floor, d0_sq)
    n_viol = violations_from_columns(emp[pos], se[pos], bound)
    passed = -1.3 <= slope <= -0.7 and n_viol == 0
    detail = f"final-decade slope {slope:.3f} (window [-1.3, -0.7]), violations {n_viol}/{int(pos.sum())}"
    return _finish(8, "decaying step size", start, passed, detail)


def w2_contraction(tamper: float = 1.0) -> CriterionResult:
    """Sliced squared-W2 between two starts decays monotonically at the pinned rate."""
    start = time.perf_counter()
    summary, gamma, ens_a, ens_b = _contraction_parts()
    projections = 128
    n_times = ens_a.times.size
    w2 = np.empty(n_times)
    se = np.empty(n_times)
    for j in range(n_times):
        per = w2_sliced_detail(ens_a.states[ens_a.alive, j], ens_b.states[ens_b.alive, j],
                               projections, np.random.default_rng(9))
        w2[j] = per.mean()
        se[j] = per.std(ddof=1) / math.sqrt(projections)
    final = ens_a.states[ens_a.alive, -1]
    half = final.shape[0] // 2
    floor = w2_sliced(final[:half], final[half:], projections, np.random.default_rng(9))
    idx = np.flatnonzero(w2 > 5.0 * floor)
    breaks = 0
    for a, b in zip(idx[:-1], idx[1:]):
        if w2[b] > w2[a] + 3.0 * (se[a] + se[b]):
            breaks += 1
    rate = float(-np.polyfit(ens_a.times[idx], np.log(w2[idx]), 1)[0])
    target = 0.5 * 2.0 * summary.mu * (1.0 - 2.0 * gamma * summary.K)
    passed = idx.size >= 6 and breaks == 0 and rate >= target
    detail = (f"window {idx.size} points above 5x floor {floor:.2e}, monotonicity breaks "
              f"{breaks}, fitted rate {rate:.4f} (floor {target:.4f})")
    return _finish(9, "Wasserstein contraction", start, passed, detail)


def quartic_positivity(tamper: float = 1.0) -> CriterionResult:
    """The centered-residual quartic ratio is positive on 50 random instances."""
    start = time.perf_counter()
    failures = 0
    smallest = math.inf
    for i in range(50):
        d = 5 if i < 25 else 10
        noise = NoiseModel.additive(0.25) if i % 2 == 0 else NoiseModel.interpolating()
        spec = GeneratorSpec(n=2 * d, d=d, spectrum=Spectrum.power_law(1.0),
                             noise_model=noise, seed=3000 + i)
        inst = generate_empirical(spec, gamma_fraction=0.3)
        rep = quartic_form_constant(inst.X, inst.y, interpolator(inst),
                                    probes=1500, rng=np.random.default_rng(4000 + i))
        smallest = min(smallest, rep.c_hat)
        failures += rep.c_hat <= 0.0
    passed = failures == 0
    detail = f"failures {failures}/50, smallest c_hat {smallest:.3e}"
    return _finish(10, "quartic-form positivity", start, passed, detail)


def heavy_tail_onset(tamper: float = 1.0) -> CriterionResult:
    """Large steps fatten the stationary tail: Hill ordering plus moment growth."""
    start = time.perf_counter()
    inst, summary, star, _, _ = _noisy_parts()
    lam_top = float(summary.eigenvalues[0])
    gamma_large = 0.9 / (3.0 * lam_top)
    gamma_small = 0.05 / (3.0 * lam_top)
    t_end = 20.0 / summary.mu

    def stationary_radii(gamma, m, seed):
        plan = SimulationPlan(t_end=t_end, ensemble_size=m, seed=seed,
                              dynamics=DynamicsKind.SDE_EMPIRICAL, dt=0.03,
                              save_times=(t_end,))
        with warnings.catch_warnings():
            # the large step sits above 1/(3K) on purpose; that is the regime under test
            warnings.simplefilter("ignore", RuntimeWarning)
            ens = simulate_ensemble(inst, plan, StepSchedule.constant(gamma))
        final = ens.states[ens.alive, -1, :]
        return np.linalg.norm(final - star, axis=1), ens.n_diverged

    radii_large, div_large = stationary_radii(gamma_large, 4096, 606)
    radii_small, div_small = stationary_radii(gamma_small, 2048, 704)
    hill_large = hill_tail_index(radii_large, k=32)
    hill_small = hill_tail_index(radii_small, k=32)
    seq_large = tail_report(radii_large, gamma_large).moment_growth[8.0]
    seq_small = tail_report(radii_small, gamma_small).moment_growth[8.0]
    growth = float(seq_large[-1] / seq_large[len(seq_large) // 2])
    plateau = float(abs(seq_small[-1] - seq_small[len(seq_small) // 2])
                    / seq_small[len(seq_small) // 2])
    passed = hill_large < hill_small and growth > 2.0 and plateau <= 0.2
    detail = (f"hill {hill_large:.2f} < {hill_small:.2f}, order-8 growth {growth:.2f} "
              f"(floor 2), plateau deviation {plateau:.3f} (cap 0.2), "
              f"diverged {div_large}+{div_small}")
    return _finish(11, "heavy-tail onset", start, passed, detail)


def integrator_validity(tamper: float = 1.0) -> CriterionResult:
    """Scalar OU closed form and the Dynkin identity hold on the integrator path."""
    start = time.perf_counter()
    ou = empirical_instance([[1.0]], [0.0], [1.5], 0.8)
    saves = (0.0, 0.25, 0.5, 1.0, 1.5, 2.0)
    plan = SimulationPlan(t_end=2.0, ensemble_size=10_000, seed=111,
                          dynamics=DynamicsKind.SDE_GAUSSIAN_PROXY, dt=1e-3,
                          save_times=saves, proxy_sigma=1.0)
    with warnings.catch_warnings():
        # the scalar pin gamma=0.8 sits above 1/(3K)=1/3 by design
        warnings.simplefilter("ignore", RuntimeWarning)
        ens = simulate_ensemble(ou, plan)
    paths = ens.states[ens.alive, :, 0]
    m = paths.shape[0]
    t = ens.times
    pos = t > 0
    mean_exact = 1.5 * np.exp(-t)
    var_exact = 0.4 * (1.0 - np.exp(-2.0 * t))
    mean_hat = paths.mean(axis=0)
    se_mean = paths.std(axis=0, ddof=1) / math.sqrt(m)
    var_hat = paths.var(axis=0, ddof=1)
    se_var = var_hat * math.sqrt(2.0 / (m - 1))
    z_mean = float(np.max(np.abs(mean_hat - mean_exact)[pos] / se_mean[pos]))
    z_var = float(np.max(np.abs(var_hat - var_exact)[pos] / se_var[pos]))

    inst = small_instance()
    star = interpolator(inst)
    plan2 = SimulationPlan(t_end=1.0, ensemble_size=10_000, seed=222,
                           dynamics=DynamicsKind.SDE_EMPIRICAL, dt=1e-3, save_stride=20)
    ens2 = simulate_ensemble(inst, plan2)
    lyap = 0.5 * np.sum((ens2.states[ens2.alive] - star) ** 2, axis=2)
    m2 = lyap.shape[0]
    grid = ens2.times
    h = 2 * (grid[1] - grid[0])
    z_dynkin = 0.0
    for probe in (0.1, 0.2, 0.4, 0.6, 0.8):
        j = int(np.argmin(np.abs(grid - probe)))
        fd = (lyap[:, j + 2] - lyap[:, j - 2]) / (2.0 * h)
        gen = generator_apply_quadratic(inst, ens2.states[ens2.alive, j, :])
        se_fd = fd.std(ddof=1) / math.sqrt(m2)
        se_gen = gen.std(ddof=1) / math.sqrt(m2)
        z = abs(float(fd.mean() - gen.mean())) / math.sqrt(se_fd ** 2 + se_gen ** 2)
        z_dynkin = max(z_dynkin, z)
    passed = z_mean <= 3.0 and z_var <= 3.0 and z_dynkin <= 3.0
    detail = (f"OU mean z {z_mean:.2f}, variance z {z_var:.2f}, Dynkin z {z_dynkin:.2f} "
              f"(caps 3)")
    return _finish(12, "integrator validity", start, passed, detail)


def population_convergence(tamper: float = 1.0) -> CriterionResult:
    """Closed-form population dynamics stay under the parametric bound (surrogate K)."""
    start = time.perf_counter()
    inst, summary, star, ens = _population_parts()
    emp, se = MeanSqDistTo(star)(ens)
    bound = tamper * bound_parametric_noiseless(ens.times, inst.theta0, star,
                                                summary.mu, summary.K, inst.gamma)
    n_viol = violations_from_columns(emp, se, bound)
    passed = n_viol == 0 and ens.n_diverged == 0
    detail = f"violations {n_viol}/{emp.size}, diverged {ens.n_diverged}"
    return _finish(13, "population noiseless convergence", start, passed, detail)


_REGISTRY = {
    1: noiseless_convergence,
    2: two_regime_shape,
    3: noise_covariance_fidelity,
    4: span_confinement,
    5: invariant_localization,
    6: gaussian_proxy_covariance,
    7: ergodic_averaging,
    8: stepsize_decay_rate,
    9: w2_contraction,
    10: quartic_positivity,
    11: heavy_tail_onset,
    12: integrator_validity,
    13: population_convergence,
}

CRITERION_NUMBERS = tuple(sorted(_REGISTRY))


def run_all(tamper: float = 1.0, numbers=None, echo=None) -> list:
    """Run the acceptance checks in order and return their results.

    numbers restricts to a subset (for debugging); echo, when given, is called
    with the formatted line of each finished check.
    """
    picked = CRITERION_NUMBERS if numbers is None else tuple(sorted(set(int(n) for n in numbers)))
    unknown = [n for n in picked if n not in _REGISTRY]
    if unknown:
        raise ValueError(f"unknown criterion numbers: {unknown}")
    results = []
    for number in picked:
        result = _REGISTRY[number](tamper)
        if echo is not None:
            echo(format_result(result))
        results.append(result)
    return results
