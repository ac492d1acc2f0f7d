"""Discrete SGD and Euler-Maruyama trajectory ensembles.

Four dynamics run over a common plan: the single-sample SGD recursion, the
empirical SDE (n-dimensional Brownian motion through the centered residual
factor), the population SDE (Gaussian closed-form diffusion), and a constant
Gaussian stand-in. Everything is vectorized across the ensemble; each
trajectory owns a PCG64 stream spawned from the plan seed, with draws consumed
in fixed-size chunks so equal seeds reproduce saved states bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .noise import psd_sqrt
from .problems import (InputLaw, ProblemInstance, Regime, classify_regime,
                       interpolator, population_k_surrogate)

# Chunked draw buffers hold at most this many floats (~134 MB).
_BUFFER_FLOATS = 2 ** 24
_MAX_CHUNK = 64


class ScheduleKind(Enum):
    CONSTANT = "constant"
    POLYNOMIAL_DECAY = "polynomial_decay"


@dataclass(frozen=True)
class StepSchedule:
    """Step-size policy: a constant gamma, or gamma_t = 1 / (2K + t^alpha)."""

    kind: ScheduleKind
    gamma: float | None = None
    alpha: float | None = None
    K: float | None = None

    @staticmethod
    def constant(gamma: float) -> "StepSchedule":
        if gamma < 0:
            raise ValueError("gamma must be nonnegative")
        return StepSchedule(kind=ScheduleKind.CONSTANT, gamma=float(gamma))

    @staticmethod
    def polynomial_decay(alpha: float, K: float) -> "StepSchedule":
        if alpha <= 1:
            raise ValueError("polynomial decay needs alpha > 1")
        if K <= 0:
            raise ValueError("polynomial decay needs K > 0")
        return StepSchedule(kind=ScheduleKind.POLYNOMIAL_DECAY, alpha=float(alpha), K=float(K))

    def gamma_at(self, t: float) -> float:
        if self.kind is ScheduleKind.CONSTANT:
            return self.gamma
        return 1.0 / (2.0 * self.K + t ** self.alpha)


class DynamicsKind(Enum):
    DISCRETE_SGD = "discrete_sgd"
    SDE_EMPIRICAL = "sde_empirical"
    SDE_POPULATION = "sde_population"
    SDE_GAUSSIAN_PROXY = "sde_gaussian_proxy"


@dataclass(frozen=True)
class SimulationPlan:
    """How to integrate: grid, horizon, ensemble size, seed, and which dynamics.

    dt of None picks min(gamma/10, 1/(10 lambda_max)). Saved states default to
    every save_stride-th grid point; save_times (snapped to the grid, always
    including t=0) overrides the stride. time_averages turns on trapezoidal
    accumulation of theta over every internal step. proxy_sigma scales the
    Gaussian stand-in's noise (None means the root of the instance's loss
    floor). Keep dt <= gamma when comparing against discrete SGD, whose k-th
    step spans time gamma.
    """

    t_end: float
    ensemble_size: int
    seed: int
    dynamics: DynamicsKind
    dt: float | None = None
    save_stride: int = 1
    save_times: tuple | None = None
    time_averages: bool = False
    proxy_sigma: float | None = None

    def __post_init__(self):
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be at least 1")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.save_stride < 1:
            raise ValueError("save_stride must be at least 1")
        if self.save_times is not None:
            object.__setattr__(self, "save_times", tuple(float(t) for t in self.save_times))


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """M saved trajectories on a common time grid.

    states has shape (M, T, d) with states[:, 0] = theta0; time_averages, when
    requested, holds the running trapezoidal means on the same grid. seeds
    records each trajectory's 128-bit stream key; diverged marks trajectories
    that left float range (their saved rows hold non-finite values and
    ensemble statistics must exclude them).
    """

    times: np.ndarray
    states: np.ndarray
    seeds: np.ndarray
    diverged: np.ndarray
    time_averages: np.ndarray | None = None

    @property
    def alive(self) -> np.ndarray:
        return ~self.diverged

    @property
    def n_diverged(self) -> int:
        return int(self.diverged.sum())


def sgd_step(instance: ProblemInstance, theta, rng, gamma: float | None = None) -> np.ndarray:
    """One single-sample step: theta - gamma (<theta, x> - y) x.

    Empirical instances draw a uniform row; population instances a fresh
    (x, y) from the model law. Convenience API; the ensemble runner uses the
    same update vectorized.
    """
    theta = np.asarray(theta, dtype=float)
    g = instance.gamma if gamma is None else gamma
    if instance.regime is Regime.EMPIRICAL:
        i = int(rng.integers(0, instance.n))
        x = instance.X[i]
        resid = float(x @ theta - instance.y[i])
    else:
        pm = instance.population_model
        if pm.input_law is InputLaw.SAMPLE_BASED:
            x = pm.pool[int(rng.integers(0, pm.pool.shape[0]))]
        else:
            vals, vecs = np.linalg.eigh(pm.Sigma)
            x = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ rng.standard_normal(pm.d)
        xi = np.sqrt(pm.noise_variance) * rng.standard_normal() if pm.noise_variance > 0 else 0.0
        resid = float(x @ (theta - pm.theta_star) - xi)
    return theta - g * resid * x


def em_step(theta, drift, factor, gamma_t: float, dt: float, gauss) -> np.ndarray:
    """Explicit Euler-Maruyama update theta + dt drift + sqrt(gamma_t dt) factor gauss."""
    theta = np.asarray(theta, dtype=float)
    drift = np.asarray(drift, dtype=float)
    factor = np.asarray(factor, dtype=float)
    gauss = np.asarray(gauss, dtype=float)
    if drift.shape != theta.shape or factor.shape[0] != theta.shape[0]:
        raise ValueError("drift and factor rows must match the state dimension")
    if gauss.shape != (factor.shape[1],):
        raise ValueError("gauss must have one coordinate per factor column")
    return theta + dt * drift + np.sqrt(gamma_t * dt) * (factor @ gauss)


def _spawn_generators(seed: int, M: int):
    children = np.random.SeedSequence(seed).spawn(M)
    seeds = np.array([c.generate_state(2) for c in children], dtype=np.uint64)
    gens = [np.random.Generator(np.random.PCG64(c)) for c in children]
    return gens, seeds


def _chunk_size(M: int, cols: int) -> int:
    return max(1, min(_MAX_CHUNK, _BUFFER_FLOATS // max(1, M * cols)))


class _NormalChunks:
    """Per-trajectory standard normals, refilled in fixed-size chunks."""

    def __init__(self, gens, cols: int):
        self.gens = gens
        self.cols = cols
        self.chunk = _chunk_size(len(gens), cols)
        self.buf = np.empty((len(gens), self.chunk, cols))
        self.pos = self.chunk

    def next(self) -> np.ndarray:
        if self.pos == self.chunk:
            for i, g in enumerate(self.gens):
                self.buf[i] = g.standard_normal((self.chunk, self.cols))
            self.pos = 0
        out = self.buf[:, self.pos, :]
        self.pos += 1
        return out


class _IndexChunks:
    """Per-trajectory uniform row indices, refilled in fixed-size chunks."""

    def __init__(self, gens, n: int):
        self.gens = gens
        self.n = n
        self.chunk = _chunk_size(len(gens), 1)
        self.buf = np.empty((len(gens), self.chunk), dtype=np.int64)
        self.pos = self.chunk

    def next(self) -> np.ndarray:
        if self.pos == self.chunk:
            for i, g in enumerate(self.gens):
                self.buf[i] = g.integers(0, self.n, size=self.chunk)
            self.pos = 0
        out = self.buf[:, self.pos]
        self.pos += 1
        return out


def _instance_sigma(instance: ProblemInstance) -> np.ndarray:
    if instance.regime is Regime.EMPIRICAL:
        return instance.X.T @ instance.X / instance.n
    return instance.population_model.Sigma


def _default_dt(instance: ProblemInstance, gamma0: float) -> float:
    lam_max = float(np.linalg.eigvalsh(_instance_sigma(instance)).max())
    cand = 1.0 / (10.0 * lam_max)
    return min(gamma0 / 10.0, cand) if gamma0 > 0 else cand


def _stability_K(instance: ProblemInstance) -> float:
    if instance.regime is Regime.EMPIRICAL:
        return float(np.max(np.einsum("ij,ij->i", instance.X, instance.X)))
    return population_k_surrogate(instance.population_model.Sigma)


def _save_map(n_steps: int, times: np.ndarray, plan: SimulationPlan) -> np.ndarray:
    if plan.save_times is not None:
        wanted = np.asarray(plan.save_times, dtype=float)
        idx = np.clip(np.rint(np.interp(wanted, times, np.arange(times.size))).astype(int), 0, n_steps)
        idx = np.union1d(idx, [0])
    else:
        idx = np.arange(0, n_steps + 1, plan.save_stride)
        idx = np.union1d(idx, [n_steps])
    return idx


def simulate_ensemble(instance: ProblemInstance, plan: SimulationPlan,
                      schedule: StepSchedule | None = None) -> TrajectoryEnsemble:
    """Run M independent trajectories of the planned dynamics.

    Time averages, when requested, accumulate by the trapezoidal rule over
    every internal step, not just saved ones. Trajectories that leave float
    range are flagged diverged and kept out of nothing here (their rows simply
    carry non-finite values); a constant step size at or above the 1/(3K)
    stability threshold draws a warning but never a rejection. With gamma = 0
    all trajectories coincide with the gradient flow.
    """
    if schedule is None:
        schedule = StepSchedule.constant(instance.gamma)
    kind = plan.dynamics
    if kind is DynamicsKind.SDE_EMPIRICAL and instance.regime is not Regime.EMPIRICAL:
        raise ValueError("empirical dynamics need an empirical instance")
    if kind is DynamicsKind.SDE_POPULATION:
        if instance.regime is not Regime.POPULATION:
            raise ValueError("population dynamics need a population instance")
        if instance.population_model.input_law is not InputLaw.GAUSSIAN_CLOSED_FORM:
            raise ValueError("population dynamics integrate the Gaussian closed form; "
                             "sample pools are for covariance estimation")
    if schedule.kind is ScheduleKind.CONSTANT and schedule.gamma > 0:
        K = _stability_K(instance)
        if schedule.gamma >= 1.0 / (3.0 * K):
            warnings.warn(
                f"constant step size {schedule.gamma:.3g} is at or above the stability "
                f"threshold 1/(3K) = {1.0 / (3.0 * K):.3g}; integrating anyway",
                RuntimeWarning,
            )
    if kind is DynamicsKind.DISCRETE_SGD:
        times = _sgd_times(plan, schedule)
    else:
        dt = plan.dt if plan.dt is not None else _default_dt(instance, schedule.gamma_at(0.0))
        n_steps = int(np.ceil(plan.t_end / dt - 1e-9))
        times = np.arange(n_steps + 1) * dt
    save_idx = _save_map(times.size - 1, times, plan)
    runner = {
        DynamicsKind.DISCRETE_SGD: _run_sgd,
        DynamicsKind.SDE_EMPIRICAL: _run_sde_empirical,
        DynamicsKind.SDE_POPULATION: _run_sde_population,
        DynamicsKind.SDE_GAUSSIAN_PROXY: _run_sde_proxy,
    }[kind]
    gens, seeds = _spawn_generators(plan.seed, plan.ensemble_size)
    with np.errstate(over="ignore", invalid="ignore"):
        states, averages = runner(instance, plan, schedule, times, save_idx, gens)
    diverged = ~np.isfinite(states).all(axis=(1, 2))
    if diverged.any():
        warnings.warn(f"{int(diverged.sum())} of {plan.ensemble_size} trajectories diverged", RuntimeWarning)
    times_out = times[save_idx]
    times_out.setflags(write=False)
    return TrajectoryEnsemble(times=times_out, states=states, seeds=seeds,
                              diverged=diverged, time_averages=averages)


def _sgd_times(plan: SimulationPlan, schedule: StepSchedule) -> np.ndarray:
    if schedule.kind is ScheduleKind.CONSTANT:
        if schedule.gamma <= 0:
            raise ValueError("discrete SGD needs a positive step size")
        n_steps = int(np.ceil(plan.t_end / schedule.gamma - 1e-9))
        return np.arange(n_steps + 1) * schedule.gamma
    ts = [0.0]
    while ts[-1] < plan.t_end - 1e-12:
        ts.append(ts[-1] + schedule.gamma_at(ts[-1]))
    return np.array(ts)


class _Saver:
    """Collects saved states and trapezoidal averages on the save grid."""

    def __init__(self, plan: SimulationPlan, times, save_idx, M, d, theta0):
        self.slots = {int(k): s for s, k in enumerate(save_idx)}
        self.times = times
        self.states = np.empty((M, save_idx.size, d))
        self.averages = np.empty((M, save_idx.size, d)) if plan.time_averages else None
        self.theta0 = theta0

    def maybe_save(self, k, theta, acc):
        slot = self.slots.get(k)
        if slot is None:
            return
        self.states[:, slot, :] = theta
        if self.averages is not None:
            t = self.times[k]
            self.averages[:, slot, :] = self.theta0 if t == 0.0 else acc / t


def _run_sgd(instance, plan, schedule, times, save_idx, gens):
    M, d = plan.ensemble_size, instance.d
    TH = np.broadcast_to(instance.theta0, (M, d)).copy()
    acc = np.zeros((M, d)) if plan.time_averages else None
    saver = _Saver(plan, times, save_idx, M, d, instance.theta0)
    saver.maybe_save(0, TH, acc)
    if instance.regime is Regime.EMPIRICAL:
        idx_chunks = _IndexChunks(gens, instance.n)
        X, y = instance.X, instance.y
        draw = None
    else:
        pm = instance.population_model
        vals, vecs = np.linalg.eigh(pm.Sigma)
        root = vecs * np.sqrt(np.clip(vals, 0.0, None))
        chunks = _NormalChunks(gens, d + 1)
        noise_sd = np.sqrt(pm.noise_variance)
    for k in range(times.size - 1):
        gamma_t = times[k + 1] - times[k]
        if instance.regime is Regime.EMPIRICAL:
            rows = idx_chunks.next()
            xsel = X[rows]
            resid = np.einsum("md,md->m", TH, xsel) - y[rows]
        else:
            g = chunks.next()
            xsel = g[:, :d] @ root.T
            resid = np.einsum("md,md->m", TH - pm.theta_star, xsel) - noise_sd * g[:, d]
        new = TH - (gamma_t * resid)[:, None] * xsel
        if acc is not None:
            acc += (0.5 * gamma_t) * (TH + new)
        TH = new
        saver.maybe_save(k + 1, TH, acc)
    return saver.states, saver.averages


def _run_sde_empirical(instance, plan, schedule, times, save_idx, gens):
    if instance.d <= instance.n:
        return _run_sde_empirical_theta(instance, plan, schedule, times, save_idx, gens)
    return _run_sde_empirical_residual(instance, plan, schedule, times, save_idx, gens)


def _run_sde_empirical_theta(instance, plan, schedule, times, save_idx, gens):
    M, n, d = plan.ensemble_size, instance.n, instance.d
    X, y = instance.X, instance.y
    TH = np.broadcast_to(instance.theta0, (M, d)).copy()
    acc = np.zeros((M, d)) if plan.time_averages else None
    saver = _Saver(plan, times, save_idx, M, d, instance.theta0)
    saver.maybe_save(0, TH, acc)
    chunks = _NormalChunks(gens, n)
    for k in range(times.size - 1):
        dt = times[k + 1] - times[k]
        gamma_t = schedule.gamma_at(times[k])
        r = TH @ X.T - y
        g = chunks.next()
        gc = g - g.mean(axis=1, keepdims=True)
        f = (-dt / n) * r + np.sqrt(gamma_t * dt / n) * (r * gc)
        new = TH + f @ X
        if acc is not None:
            acc += (0.5 * dt) * (TH + new)
        TH = new
        saver.maybe_save(k + 1, TH, acc)
    return saver.states, saver.averages


def _run_sde_empirical_residual(instance, plan, schedule, times, save_idx, gens):
    # overparametrized path: evolve residuals r = X theta - y and span
    # coefficients Q with theta = theta0 + Q X, so the per-step cost scales
    # with n, not d, and saved states lie in theta0 + range(X^T) exactly
    M, n, d = plan.ensemble_size, instance.n, instance.d
    X, y = instance.X, instance.y
    H = X @ X.T
    r0 = X @ instance.theta0 - y
    R = np.broadcast_to(r0, (M, n)).copy()
    Q = np.zeros((M, n))
    accQ = np.zeros((M, n)) if plan.time_averages else None
    saver = _Saver(plan, times, save_idx, M, d, instance.theta0)
    saver.maybe_save(0, np.broadcast_to(instance.theta0, (M, d)), np.zeros((M, d)) if accQ is not None else None)
    chunks = _NormalChunks(gens, n)
    for k in range(times.size - 1):
        dt = times[k + 1] - times[k]
        gamma_t = schedule.gamma_at(times[k])
        g = chunks.next()
        gc = g - g.mean(axis=1, keepdims=True)
        f = (-dt / n) * R + np.sqrt(gamma_t * dt / n) * (R * gc)
        Qnew = Q + f
        if accQ is not None:
            accQ += (0.5 * dt) * (Q + Qnew)
        Q = Qnew
        R = R + f @ H
        slot = saver.slots.get(k + 1)
        if slot is not None:
            saver.states[:, slot, :] = instance.theta0 + Q @ X
            if saver.averages is not None:
                t = times[k + 1]
                saver.averages[:, slot, :] = instance.theta0 + (accQ / t) @ X
    return saver.states, saver.averages


def _run_sde_population(instance, plan, schedule, times, save_idx, gens):
    M, d = plan.ensemble_size, instance.d
    pm = instance.population_model
    Sigma, theta_star, nv = pm.Sigma, pm.theta_star, pm.noise_variance
    Sroot = psd_sqrt(Sigma)
    TH = np.broadcast_to(instance.theta0, (M, d)).copy()
    acc = np.zeros((M, d)) if plan.time_averages else None
    saver = _Saver(plan, times, save_idx, M, d, instance.theta0)
    saver.maybe_save(0, TH, acc)
    chunks = _NormalChunks(gens, d + 1)
    for k in range(times.size - 1):
        dt = times[k + 1] - times[k]
        gamma_t = schedule.gamma_at(times[k])
        delta = TH - theta_star
        V = delta @ Sigma
        # exact factor [Sigma delta | sqrt(2 L) Sigma^(1/2)]: same covariance
        # as the closed form without a per-trajectory eigensolve
        L = 0.5 * np.einsum("md,md->m", V, delta) + 0.5 * nv
        g = chunks.next()
        scale = np.sqrt(gamma_t * dt)
        new = TH - dt * V + scale * (g[:, :1] * V + np.sqrt(2.0 * np.clip(L, 0.0, None))[:, None] * (g[:, 1:] @ Sroot))
        if acc is not None:
            acc += (0.5 * dt) * (TH + new)
        TH = new
        saver.maybe_save(k + 1, TH, acc)
    return saver.states, saver.averages


def _run_sde_proxy(instance, plan, schedule, times, save_idx, gens):
    M, d = plan.ensemble_size, instance.d
    Sigma = _instance_sigma(instance)
    theta_star = interpolator(instance)
    sigma = plan.proxy_sigma
    if sigma is None:
        sigma = float(np.sqrt(classify_regime(instance).sigma_sq_floor))
    Sroot = psd_sqrt(Sigma)
    TH = np.broadcast_to(instance.theta0, (M, d)).copy()
    acc = np.zeros((M, d)) if plan.time_averages else None
    saver = _Saver(plan, times, save_idx, M, d, instance.theta0)
    saver.maybe_save(0, TH, acc)
    chunks = _NormalChunks(gens, d)
    for k in range(times.size - 1):
        dt = times[k + 1] - times[k]
        gamma_t = schedule.gamma_at(times[k])
        g = chunks.next()
        new = TH - dt * ((TH - theta_star) @ Sigma) + (np.sqrt(gamma_t * dt) * sigma) * (g @ Sroot)
        if acc is not None:
            acc += (0.5 * dt) * (TH + new)
        TH = new
        saver.maybe_save(k + 1, TH, acc)
    return saver.states, saver.averages


def generator_apply_quadratic(instance: ProblemInstance, theta) -> float | np.ndarray:
    """Exact generator action on V(theta) = 0.5 ||theta - theta_star||^2.

    Returns -<Sigma_hat eta, eta> + (gamma / 2n) Tr[X^T R R^T X] with
    eta = theta - theta_star and R the centered residual matrix; the trace
    reduces to sum_i r_i^2 ||x_i||^2 - ||X^T r||^2 / n. Accepts (..., d)
    batches. Empirical regime only.
    """
    if instance.regime is not Regime.EMPIRICAL:
        raise ValueError("the quadratic generator is defined for empirical instances")
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1:] != (instance.d,):
        raise ValueError(f"theta has dimension {theta.shape[-1] if theta.ndim else 0}, expected {instance.d}")
    X, y, n = instance.X, instance.y, instance.n
    theta_star = interpolator(instance)
    eta = theta - theta_star
    Xeta = eta @ X.T
    drift_term = -np.einsum("...i,...i->...", Xeta, Xeta) / n
    r = theta @ X.T - y
    row_sq = np.einsum("ij,ij->i", X, X)
    trace = (r * r) @ row_sq - np.einsum("...i,...i->...", r @ X, r @ X) / n
    out = drift_term + (instance.gamma / (2.0 * n)) * trace
    return float(out) if out.ndim == 0 else out
