"""Convergence bounds and the estimators that check them.

Closed-form bound evaluators (parametric, non-parametric, Wasserstein,
localization, ergodic averaging, step-size decay) plus the measurement side:
exact 1-d and sliced Wasserstein distances, the Hill tail-index estimator,
the quartic-form constant search, and bound-vs-ensemble reports with a
3-standard-error violation rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dynamics import TrajectoryEnsemble
from .problems import ALPHA_GRID, RANK_CUTOFF

# Relative slack on the violation rule so exact float ties at t=0 never count.
_TIE_GUARD = 1e-12
# Tolerated relative size of a kernel component in the starting offset.
_KERNEL_TOL = 1e-8

_QUARTIC_RADII = (1e-2, 1e-1, 1.0, 1e1, 1e2)
_REFINE_ROUNDS = ((0.1, 200), (0.03, 200), (0.01, 200))


def _eval_time(t, f):
    t_arr = np.asarray(t, dtype=float)
    out = f(t_arr)
    return float(out) if t_arr.ndim == 0 else out


def bound_parametric_noiseless(t, theta0, theta_star, mu: float, K: float, gamma: float):
    """Exponential decay envelope dist0^2 exp(-mu (2 - K gamma) t).

    Meant for gamma below the stability threshold; accepts scalar or array t.
    """
    dist0_sq = float(np.sum((np.asarray(theta0, float) - np.asarray(theta_star, float)) ** 2))
    rate = mu * (2.0 - K * gamma)
    return _eval_time(t, lambda ts: dist0_sq * np.exp(-rate * ts))


def bound_parametric_noiseless_loose(t, theta0, theta_star, mu: float):
    """Looser companion envelope dist0^2 exp(-mu t), kept for comparison."""
    dist0_sq = float(np.sum((np.asarray(theta0, float) - np.asarray(theta_star, float)) ** 2))
    return _eval_time(t, lambda ts: dist0_sq * np.exp(-mu * ts))


def _weighted_inverse_power(Sigma, eta0, alpha: float) -> float:
    """<eta0, Sigma^(-alpha) eta0> on range(Sigma), rejecting kernel mass."""
    w, V = np.linalg.eigh(np.asarray(Sigma, dtype=float))
    lam_max = float(w.max())
    if lam_max <= 0:
        raise ValueError("Sigma has no positive eigenvalues")
    keep = w > RANK_CUTOFF * lam_max
    coef = V.T @ eta0
    norm = float(np.linalg.norm(eta0))
    kernel_mass = float(np.linalg.norm(coef[~keep])) if (~keep).any() else 0.0
    if norm > 0 and kernel_mass > _KERNEL_TOL * norm:
        raise ValueError("starting offset has a component outside range(Sigma); "
                         "the inverse-power weight is undefined there")
    return float(np.sum(coef[keep] ** 2 / w[keep] ** alpha))


def bound_nonparametric_noiseless(t, alpha: float, theta0, theta_star, Sigma,
                                  K_alpha: float, K: float, gamma: float):
    """Polynomial envelope (||eta0||^(-2/alpha) + Cons_alpha t)^(-alpha).

    Cons_alpha = (1/2alpha) (<eta0, Sigma^(-alpha) eta0>
                 + gamma K_alpha / (2 - K gamma) ||eta0||^2)^(-1/alpha).
    Needs alpha > 0 and eta0 essentially inside range(Sigma).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    eta0 = np.asarray(theta0, float) - np.asarray(theta_star, float)
    norm_sq = float(np.sum(eta0 ** 2))
    if norm_sq == 0.0:
        return _eval_time(t, lambda ts: np.zeros_like(ts, dtype=float))
    weighted = _weighted_inverse_power(Sigma, eta0, alpha)
    inner = weighted + gamma * K_alpha / (2.0 - K * gamma) * norm_sq
    cons = (1.0 / (2.0 * alpha)) * inner ** (-1.0 / alpha)
    base = norm_sq ** (-1.0 / alpha)
    return _eval_time(t, lambda ts: (base + cons * ts) ** (-alpha))


def nonparametric_envelope(t, theta0, theta_star, Sigma, k_alpha, K: float,
                           gamma: float, alphas=None):
    """Pointwise minimum of the polynomial bound over an alpha grid.

    k_alpha maps each alpha to its constant (spectral_summary provides it).
    """
    if alphas is None:
        alphas = [a for a in ALPHA_GRID if a in k_alpha]
        if not alphas:
            alphas = sorted(a for a in k_alpha if a > 0)
    if not alphas:
        raise ValueError("need at least one positive alpha")
    curves = [bound_nonparametric_noiseless(t, a, theta0, theta_star, Sigma,
                                            k_alpha[a], K, gamma) for a in alphas]
    stacked = np.stack([np.asarray(c, dtype=float) for c in curves])
    out = stacked.min(axis=0)
    return float(out) if np.asarray(t).ndim == 0 else out


def bound_w2_noisy(t, w2_0: float, mu: float, K: float, gamma: float, c: float = 2.0):
    """Wasserstein contraction envelope w2_0 exp(-2 mu (1 - gamma K c) t).

    The default c=2 gives the empirical-regime rate 2 mu (1 - 2 gamma K); the
    population companion passes its own constant c.
    """
    rate = 2.0 * mu * (1.0 - gamma * K * c)
    return _eval_time(t, lambda ts: w2_0 * np.exp(-rate * ts))


def bound_invariant_second_moment(gamma: float, K: float, sigma_sq: float, mu: float) -> float:
    """Stationary spread ceiling gamma K sigma^2 / (mu (1 - gamma K))."""
    if gamma * K >= 1.0:
        raise ValueError("needs gamma K < 1")
    return gamma * K * sigma_sq / (mu * (1.0 - gamma * K))


def bound_ergodic_average(t, gamma: float, K: float, sigma_sq: float, dist0_sq: float):
    """Time-average envelope 8 gamma K sigma^2 / t + 10 dist0_sq / t^2."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("t must be positive")
    out = 8.0 * gamma * K * sigma_sq / t_arr + 10.0 * dist0_sq / t_arr ** 2
    return float(out) if t_arr.ndim == 0 else out


def bound_stepsize_decay(t, alpha: float, mu: float, K: float, sigma_sq: float, dist0_sq: float):
    """Decaying-step envelope C_alpha / t^(alpha-1).

    C_alpha = e^(-alpha) (dist0_sq e (2(alpha-1)/mu)^(alpha-1)
              + (2 alpha/mu)^alpha sigma^2) + 2^(1+alpha) K sigma^2 / (alpha-1).
    """
    if alpha <= 1.0:
        raise ValueError("needs alpha > 1")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("t must be positive")
    c_alpha = (math.exp(-alpha) * (dist0_sq * math.e * (2.0 * (alpha - 1.0) / mu) ** (alpha - 1.0)
                                   + (2.0 * alpha / mu) ** alpha * sigma_sq)
               + 2.0 ** (1.0 + alpha) * K * sigma_sq / (alpha - 1.0))
    out = c_alpha / t_arr ** (alpha - 1.0)
    return float(out) if t_arr.ndim == 0 else out


def w2_1d(samples_a, samples_b) -> float:
    """Exact squared 2-Wasserstein distance between two 1-d samples.

    Sorted pairing is the optimal coupling in one dimension. Unequal counts
    are reconciled by taking evenly spaced order statistics of the larger
    sample, which keeps the estimate deterministic.
    """
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("need at least one sample on each side")
    if a.size != b.size:
        if a.size > b.size:
            a = a[np.round(np.linspace(0, a.size - 1, b.size)).astype(int)]
        else:
            b = b[np.round(np.linspace(0, b.size - 1, a.size)).astype(int)]
    return float(np.mean((a - b) ** 2))


def _unit_directions(P: int, d: int, rng) -> np.ndarray:
    u = rng.standard_normal((P, d))
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    small = norms[:, 0] < 1e-12
    if small.any():
        u[small] = 0.0
        u[small, 0] = 1.0
        norms = np.linalg.norm(u, axis=1, keepdims=True)
    return u / norms


def w2_sliced_detail(ensemble_a, ensemble_b, projections: int, rng) -> np.ndarray:
    """Per-direction squared 1-d distances behind the sliced estimate."""
    if projections < 1:
        raise ValueError("need at least one projection")
    a = np.asarray(ensemble_a, dtype=float)
    b = np.asarray(ensemble_b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError("ensembles must be (M, d) arrays in a common dimension")
    dirs = _unit_directions(projections, a.shape[1], rng)
    return np.array([w2_1d(a @ u, b @ u) for u in dirs])


def w2_sliced(ensemble_a, ensemble_b, projections: int, rng) -> float:
    """Sliced surrogate for squared W2: mean over random unit directions.

    Deterministic under a fixed rng seed, symmetric in its arguments.
    """
    return float(w2_sliced_detail(ensemble_a, ensemble_b, projections, rng).mean())


def hill_tail_index(samples, k: int | None = None) -> float:
    """Hill estimator of the tail index from the top k order statistics.

    alpha_hat = k / sum_i log(x_(n-i+1) / x_(n-k)); k defaults to the root of
    the sample count. Degenerate inputs (fewer than k+1 distinct positive
    values, or a flat top block) are errors rather than infinities.
    """
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x) & (x > 0)]
    if k is None:
        k = int(round(math.sqrt(x.size))) if x.size else 1
    if k < 1:
        raise ValueError("k must be at least 1")
    if k >= x.size:
        raise ValueError(f"k={k} needs more than k positive samples, got {x.size}")
    if np.unique(x).size < k + 1:
        raise ValueError("fewer than k+1 distinct positive values")
    x = np.sort(x)
    top = x[-k:]
    pivot = x[-k - 1]
    denom = float(np.sum(np.log(top / pivot)))
    if denom <= 0.0:
        raise ValueError("top order statistics are degenerate")
    return k / denom


def hill_sweep(samples, ks=None) -> dict:
    """Hill estimates across several k, skipping degenerate choices."""
    x = np.asarray(samples, dtype=float).ravel()
    n_pos = int(np.sum(np.isfinite(x) & (x > 0)))
    if ks is None:
        root = math.sqrt(max(n_pos, 1))
        ks = sorted({int(np.clip(round(root * f), 2, max(n_pos - 2, 2)))
                     for f in (0.25, 0.5, 1.0, 2.0, 4.0)})
    out = {}
    for k in ks:
        try:
            out[int(k)] = hill_tail_index(x, int(k))
        except ValueError:
            continue
    return out


class TailVerdict(Enum):
    LIGHT_TAIL = "LightTail"
    HEAVY_TAIL_SUSPECTED = "HeavyTailSuspected"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class TailReport:
    """Tail diagnostics for one stationary sample at one step size."""

    gamma: float
    hill_indices: dict
    moment_growth: dict
    verdict: TailVerdict


def moment_prefix_counts(n: int) -> np.ndarray:
    """Geometric ladder of prefix sizes used for partial-moment sequences."""
    lo = max(2, min(32, n))
    return np.unique(np.geomspace(lo, n, 11).astype(int))


def tail_report(samples, gamma: float, ks=None, moment_orders=(2, 4, 8)) -> TailReport:
    """Hill sweep plus partial-moment growth, with a coarse verdict.

    The verdict looks at the highest-order partial-moment sequence over
    geometrically growing prefixes: a plateau (final value within 20% of the
    middle one) reads as a light tail, growth past 2x as heavy, anything
    between as inconclusive.
    """
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size < 8:
        raise ValueError("need at least 8 samples for a tail report")
    hills = hill_sweep(np.abs(x), ks=ks)
    counts = moment_prefix_counts(x.size)
    growth = {}
    for p in moment_orders:
        seq = np.array([np.mean(np.abs(x[:c]) ** p) for c in counts])
        growth[float(p)] = seq
    top = growth[float(max(moment_orders))]
    mid = top[len(top) // 2]
    last = top[-1]
    if mid > 0 and last > 2.0 * mid:
        verdict = TailVerdict.HEAVY_TAIL_SUSPECTED
    elif mid > 0 and abs(last - mid) <= 0.2 * mid:
        verdict = TailVerdict.LIGHT_TAIL
    else:
        verdict = TailVerdict.INCONCLUSIVE
    return TailReport(gamma=float(gamma), hill_indices=hills, moment_growth=growth,
                      verdict=verdict)


@dataclass(frozen=True)
class QuarticFormReport:
    """Minimum of the centered-residual quartic ratio over probe directions."""

    c_hat: float
    argmin_eta: np.ndarray
    probes: int


def _quartic_ratios(X, base, dirs, radii):
    """Ratios over (direction, radius) pairs; kernel directions masked out."""
    V = dirs @ X.T
    v_sq = np.einsum("mn,mn->m", V, V)
    keep = v_sq > 1e-24 * float(np.sum(X * X))
    n = X.shape[0]
    best = np.inf
    best_eta = None
    evaluated = 0
    for rho in radii:
        v = rho * V[keep]
        r = v + base
        s = np.einsum("mn,mn->m", r, v)
        w = r * v - s[:, None] / n
        num = np.einsum("mn,mn->m", w, w)
        den = rho * rho * v_sq[keep] * rho * rho  # ||eta||^2 ||X eta||^2 with unit dirs
        ratios = num / den
        if ratios.size == 0:
            continue
        evaluated += ratios.size
        j = int(np.argmin(ratios))
        if ratios[j] < best:
            best = float(ratios[j])
            best_eta = rho * dirs[keep][j]
    return best, best_eta, evaluated


def quartic_form_constant(X, y, theta_star, probes: int, rng) -> QuarticFormReport:
    """Estimate the positivity constant of <X eta, R R^T X eta> / (||eta||^2 ||X eta||^2).

    Residuals r(eta) = X eta + (X theta_star - y) re-center the operator at
    each probe point. Uniform sphere directions at radii 1e-2 through 1e2,
    then three local refinement rounds around the running argmin. Needs
    n >= 2d.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    n, d = X.shape
    if n < 2 * d:
        raise ValueError(f"needs n >= 2d, got n={n}, d={d}")
    if probes < 1:
        raise ValueError("needs at least one probe")
    base = X @ theta_star - y
    dirs = _unit_directions(probes, d, rng)
    best, best_eta, evaluated = _quartic_ratios(X, base, dirs, _QUARTIC_RADII)
    if best_eta is None:
        raise ValueError("every probe direction fell in the kernel of X")
    for scale, count in _REFINE_ROUNDS:
        center = best_eta / np.linalg.norm(best_eta)
        cand = center + scale * rng.standard_normal((count, d))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        b, eta, ev = _quartic_ratios(X, base, cand, _QUARTIC_RADII)
        evaluated += ev
        if b < best:
            best, best_eta = b, eta
    return QuarticFormReport(c_hat=best, argmin_eta=best_eta, probes=evaluated)


def violations_from_columns(empirical, stderr, bound) -> int:
    """Count times where empirical - 3 stderr exceeds the bound.

    A hair of relative slack keeps exact float ties (t=0 rows) from counting.
    """
    emp = np.asarray(empirical, dtype=float)
    se = np.asarray(stderr, dtype=float)
    b = np.asarray(bound, dtype=float)
    if not (emp.shape == se.shape == b.shape):
        raise ValueError("columns must share a common length")
    return int(np.sum(emp - 3.0 * se > b * (1.0 + _TIE_GUARD) + _TIE_GUARD * np.abs(emp)))


@dataclass(frozen=True)
class BoundReport:
    """Aligned empirical-vs-bound columns on a saved time grid."""

    times: np.ndarray
    empirical: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    violations: int
    label: str

    def __post_init__(self):
        sizes = {self.times.size, self.empirical.size, self.stderr.size, self.bound.size}
        if len(sizes) != 1:
            raise ValueError("all report columns must have equal length")


@dataclass(frozen=True)
class MeanSqDistTo:
    """Ensemble statistic E||theta_t - ref||^2 with its standard error."""

    ref: np.ndarray
    label: str = "mean_sq_dist"

    def __call__(self, ensemble: TrajectoryEnsemble):
        states = ensemble.states[ensemble.alive]
        if states.shape[0] == 0:
            raise ValueError("every trajectory diverged; nothing to report")
        vals = np.sum((states - np.asarray(self.ref, float)) ** 2, axis=2)
        emp = vals.mean(axis=0)
        M = vals.shape[0]
        se = vals.std(axis=0, ddof=1) / math.sqrt(M) if M > 1 else np.zeros_like(emp)
        return emp, se


@dataclass(frozen=True)
class MeanSqSigmaDist:
    """Time-average statistic E||Sigma (theta_bar_t - ref)||^2."""

    Sigma: np.ndarray
    ref: np.ndarray
    label: str = "mean_sq_sigma_dist"

    def __call__(self, ensemble: TrajectoryEnsemble):
        if ensemble.time_averages is None:
            raise ValueError("plan did not request time averages")
        bars = ensemble.time_averages[ensemble.alive]
        if bars.shape[0] == 0:
            raise ValueError("every trajectory diverged; nothing to report")
        diff = (bars - np.asarray(self.ref, float)) @ np.asarray(self.Sigma, float)
        vals = np.sum(diff ** 2, axis=2)
        emp = vals.mean(axis=0)
        M = vals.shape[0]
        se = vals.std(axis=0, ddof=1) / math.sqrt(M) if M > 1 else np.zeros_like(emp)
        return emp, se


@dataclass(frozen=True)
class SlicedW2Vs:
    """Sliced squared-W2 against a fixed reference sample at each saved time."""

    reference: np.ndarray
    projections: int = 128
    seed: int = 0
    label: str = "sliced_w2"

    def __call__(self, ensemble: TrajectoryEnsemble):
        states = ensemble.states[ensemble.alive]
        if states.shape[0] == 0:
            raise ValueError("every trajectory diverged; nothing to report")
        dirs_rng = np.random.default_rng(self.seed)
        dirs = _unit_directions(self.projections, states.shape[2], dirs_rng)
        ref = np.asarray(self.reference, dtype=float)
        ref_proj = ref @ dirs.T
        emp = np.empty(states.shape[1])
        se = np.empty(states.shape[1])
        for j in range(states.shape[1]):
            proj = states[:, j, :] @ dirs.T
            per_dir = np.array([w2_1d(proj[:, p], ref_proj[:, p])
                                for p in range(self.projections)])
            emp[j] = per_dir.mean()
            se[j] = per_dir.std(ddof=1) / math.sqrt(self.projections) if self.projections > 1 else 0.0
        return emp, se


def build_bound_report(ensemble: TrajectoryEnsemble, bound_fn, statistic,
                       label: str | None = None) -> BoundReport:
    """Evaluate a statistic on the saved grid and count 3-sigma violations.

    bound_fn maps a time array to bound values; statistic maps the ensemble
    to (empirical, stderr) columns.
    """
    empirical, stderr = statistic(ensemble)
    bound = np.asarray(bound_fn(ensemble.times), dtype=float)
    if bound.ndim == 0:
        bound = np.full(ensemble.times.size, float(bound))
    violations = violations_from_columns(empirical, stderr, bound)
    if label is None:
        label = getattr(statistic, "label", statistic.__class__.__name__)
    return BoundReport(times=ensemble.times.copy(), empirical=empirical, stderr=stderr,
                       bound=bound, violations=violations, label=label)
