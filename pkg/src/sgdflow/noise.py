"""State-dependent diffusion factors for the four dynamics variants.

The single-sample gradient noise of least squares has covariance
(1/n) X^T (diag(r)^2 - r r^T / n) X at parameter theta with residuals r. This
module builds the matrix square-root factors realizing that covariance: the
exact empirical factor (1/sqrt(n)) X^T R with R = diag(r) - (1/n) r 1^T, the
Gaussian closed form for the population regime, its sample-pool estimator, and
a constant Gaussian stand-in. Monte Carlo covariance reports validate each
factor against the noise it models.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .problems import (
    InputLaw,
    PopulationModel,
    ProblemInstance,
    Regime,
    classify_regime,
    interpolator,
    loss,
    population_k_surrogate,
)

# Relative eigenvalue clamp for noisy PSD estimates.
EPS_PSD = 1e-8


@dataclass(frozen=True)
class ResidualOperator:
    """Residual vector r (r_i = <theta, x_i> - y_i) and R = diag(r) - (1/n) r 1^T.

    R annihilates the all-ones vector on the right; its Gram matrix is
    R R^T = diag(r)^2 - r r^T / n, whose kernel is spanned by
    alpha_r = (1/r_1, ..., 1/r_n) whenever all residuals are nonzero.
    """

    r: np.ndarray
    R: np.ndarray


class DiffusionVariant(Enum):
    EMPIRICAL_EXACT = "empirical_exact"
    POPULATION_GAUSSIAN_CLOSED_FORM = "population_gaussian_closed_form"
    POPULATION_SAMPLE_BASED = "population_sample_based"
    GAUSSIAN_PROXY = "gaussian_proxy"


@dataclass(frozen=True)
class DiffusionModel:
    """Which noise factor to evaluate, bound to a problem instance.

    sigma scales the Gaussian proxy (None means the square root of the
    instance's loss floor). Evaluated factors have d rows; the empirical
    variant has n columns (one per Brownian coordinate), the population
    variants and the proxy have d.
    """

    variant: DiffusionVariant
    instance: ProblemInstance
    sigma: float | None = None

    def factor(self, theta) -> np.ndarray:
        return diffusion_factor(self, theta)


def residual_operator(X, y, theta) -> ResidualOperator:
    """Residuals of theta on (X, y) and the centered residual matrix."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if X.shape[1] != theta.shape[0] or X.shape[0] != y.shape[0]:
        raise ValueError("inconsistent shapes for X, y, theta")
    r = X @ theta - y
    n = r.shape[0]
    R = np.diag(r) - np.outer(r, np.ones(n)) / n
    return ResidualOperator(r=r, R=R)


def empirical_diffusion(X, y, theta) -> np.ndarray:
    """The d x n factor (1/sqrt(n)) X^T R of the fixed-design noise."""
    X = np.asarray(X, dtype=float)
    op = residual_operator(X, y, theta)
    return X.T @ op.R / np.sqrt(X.shape[0])


def population_diffusion_sq(model: PopulationModel, theta) -> np.ndarray:
    """Squared diffusion sigma sigma^T for the population regime.

    Gaussian closed form: (Sigma delta)(Sigma delta)^T + 2 L(theta) Sigma with
    delta = theta - theta_star, exactly symmetric by construction. Sample
    based: the plug-in moment estimator E[r^2 x x^T] - E[r x] E[r x]^T over
    the pool, with the label noise integrated analytically; symmetrized and
    eigenvalue-clamped, erroring if the estimate is materially non-PSD.
    """
    theta = np.asarray(theta, dtype=float)
    delta = theta - model.theta_star
    if model.input_law is InputLaw.GAUSSIAN_CLOSED_FORM:
        v = model.Sigma @ delta
        L = 0.5 * float(delta @ v) + 0.5 * model.noise_variance
        return np.outer(v, v) + (2.0 * L) * model.Sigma
    pool = model.pool
    m = pool.shape[0]
    z = pool @ delta
    w = z * z + model.noise_variance
    second = (pool * w[:, None]).T @ pool / m
    first = pool.T @ z / m
    A = second - np.outer(first, first)
    A = (A + A.T) / 2.0
    vals, vecs = np.linalg.eigh(A)
    lam_max = max(vals.max(), 0.0)
    if vals.min() < -EPS_PSD * lam_max:
        raise ValueError("pool moment estimate is not positive semi-definite")
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


def psd_sqrt(A) -> np.ndarray:
    """Symmetric PSD square root with a relative eigenvalue clamp.

    Eigenvalues in [-eps, 0] (eps = 1e-8 lambda_max) are treated as roundoff
    and clamped to zero; anything below -eps is a hard error. Exactly diagonal
    input takes an elementwise path so diag(4, 9) -> diag(2, 3) to the ulp.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("psd_sqrt expects a square matrix")
    scale = max(np.abs(A).max(), 1.0)
    if np.abs(A - A.T).max() > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    diag = np.diag(np.diag(A))
    if np.array_equal(A, diag):
        d = np.diag(A)
        eps = EPS_PSD * max(d.max(), 0.0)
        if d.min() < -eps:
            raise ValueError("matrix is not positive semi-definite")
        return np.diag(np.sqrt(np.clip(d, 0.0, None)))
    S = (A + A.T) / 2.0
    vals, vecs = np.linalg.eigh(S)
    eps = EPS_PSD * max(vals.max(), 0.0)
    if vals.min() < -eps:
        raise ValueError("matrix is not positive semi-definite")
    root = np.sqrt(np.clip(vals, 0.0, None))
    return (vecs * root) @ vecs.T


def diffusion_factor(model: DiffusionModel, theta) -> np.ndarray:
    """Evaluate the d-row noise factor of the chosen variant at theta."""
    inst = model.instance
    theta = np.asarray(theta, dtype=float)
    if model.variant is DiffusionVariant.EMPIRICAL_EXACT:
        if inst.regime is not Regime.EMPIRICAL:
            raise ValueError("empirical factor needs an empirical instance")
        return empirical_diffusion(inst.X, inst.y, theta)
    if model.variant is DiffusionVariant.GAUSSIAN_PROXY:
        sigma = model.sigma
        if sigma is None:
            sigma = float(np.sqrt(classify_regime(inst).sigma_sq_floor))
        Sigma = _instance_covariance(inst)
        return sigma * psd_sqrt(Sigma)
    if inst.regime is not Regime.POPULATION:
        raise ValueError("population factors need a population instance")
    pm = inst.population_model
    if model.variant is DiffusionVariant.POPULATION_SAMPLE_BASED and pm.input_law is not InputLaw.SAMPLE_BASED:
        raise ValueError("sample-based factor needs a model with a sample pool")
    return psd_sqrt(population_diffusion_sq(pm, theta))


def _instance_covariance(inst: ProblemInstance) -> np.ndarray:
    if inst.regime is Regime.EMPIRICAL:
        return inst.X.T @ inst.X / inst.n
    return inst.population_model.Sigma


@dataclass(frozen=True)
class NoiseCovarianceReport:
    """Monte Carlo covariance of the gradient noise next to the model's sigma sigma^T."""

    mc_covariance: np.ndarray
    model_covariance: np.ndarray
    rel_frobenius_error: float
    draws: int


def noise_covariance_report(instance: ProblemInstance, theta, draws: int, seed: int = 0) -> NoiseCovarianceReport:
    """Compare sigma sigma^T with the sampled covariance of one-step gradient noise.

    The noise is the martingale part of a single-sample gradient: r_i x_i
    minus its mean under the sampling law (uniform row for empirical
    instances, a fresh Gaussian draw for population ones). Uses `draws`
    samples from an independently seeded stream.
    """
    if draws < 1_000:
        raise ValueError("need at least 1000 draws for a covariance report")
    theta = np.asarray(theta, dtype=float)
    rng = np.random.default_rng(seed)
    if instance.regime is Regime.EMPIRICAL:
        X, y, n = instance.X, instance.y, instance.n
        r = X @ theta - y
        counts = np.bincount(rng.integers(0, n, size=draws), minlength=n).astype(float)
        # weighted first/second moments of v = r_i x_i over the drawn rows
        first = X.T @ (counts * r) / draws
        second = (X * (counts * r * r)[:, None]).T @ X / draws
        mc = second - np.outer(first, first)
        G = empirical_diffusion(X, y, theta)
        model_cov = G @ G.T
    else:
        pm = instance.population_model
        if pm.input_law is InputLaw.SAMPLE_BASED:
            idx = rng.integers(0, pm.pool.shape[0], size=draws)
            xs = pm.pool[idx]
        else:
            vals, vecs = np.linalg.eigh(pm.Sigma)
            root = vecs * np.sqrt(np.clip(vals, 0.0, None))
            xs = rng.standard_normal((draws, pm.d)) @ root.T
        xi = np.sqrt(pm.noise_variance) * rng.standard_normal(draws) if pm.noise_variance > 0 else 0.0
        resid = xs @ (theta - pm.theta_star) - xi
        v = xs * resid[:, None]
        vbar = v.mean(axis=0)
        mc = v.T @ v / draws - np.outer(vbar, vbar)
        model_cov = population_diffusion_sq(pm, theta)
    mc = (mc + mc.T) / 2.0
    denom = np.linalg.norm(model_cov)
    rel = float(np.linalg.norm(mc - model_cov) / denom) if denom > 0 else float(np.linalg.norm(mc))
    return NoiseCovarianceReport(mc_covariance=mc, model_covariance=model_cov,
                                 rel_frobenius_error=rel, draws=draws)


def report_to_json(report: NoiseCovarianceReport) -> str:
    import json

    return json.dumps({
        "mc_covariance": report.mc_covariance.tolist(),
        "model_covariance": report.model_covariance.tolist(),
        "rel_frobenius_error": report.rel_frobenius_error,
        "draws": report.draws,
    })


def lipschitz_probe(model: PopulationModel, pairs) -> float:
    """Worst observed noise-factor Lipschitz ratio over a probe set.

    For each pair (theta, eta) the ratio is
    ||sigma(theta) - sigma(eta)||_F^2 / (2 K <Sigma (theta - eta), theta - eta>)
    with sigma the PSD root of the Gaussian closed form and K the quantile
    surrogate for the boundedness constant. Identical pairs are skipped (0/0).
    A finite max over any probe set underestimates the true supremum; treat
    the value as an estimate.
    """
    if model.input_law is not InputLaw.GAUSSIAN_CLOSED_FORM:
        raise ValueError("lipschitz probe is defined for the Gaussian closed form")
    K = population_k_surrogate(model.Sigma)
    best = 0.0
    for theta, eta in pairs:
        theta = np.asarray(theta, dtype=float)
        eta = np.asarray(eta, dtype=float)
        diff = theta - eta
        quad = float(diff @ model.Sigma @ diff)
        if quad == 0.0:
            continue
        s1 = psd_sqrt(population_diffusion_sq(model, theta))
        s2 = psd_sqrt(population_diffusion_sq(model, eta))
        num = float(np.sum((s1 - s2) ** 2))
        best = max(best, num / (2.0 * K * quad))
    return best


def lipschitz_scale_bound(model: PopulationModel) -> float:
    """The d^2 / a^2 yardstick that accompanies lipschitz_probe estimates."""
    if model.noise_floor_a is None:
        raise ValueError("model has no noise floor constant a")
    return model.d ** 2 / model.noise_floor_a ** 2
