"""Least-squares problem instances and their spectral anatomy.

An instance is either empirical (a fixed design matrix X and targets y, loss
averaged over the rows) or population (a Gaussian input law with covariance
Sigma, an optimum theta_star, and an additive label-noise variance). Everything
downstream -- diffusion factors, integrators, bounds -- reads the problem
through this module: losses, minimum-norm interpolators, eigenstructure, and
the interpolating/non-interpolating regime split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

# Eigenvalues below RANK_CUTOFF * lambda_max count as zero rank.
RANK_CUTOFF = 1e-10
# Singular-value cutoff matching RANK_CUTOFF on eigenvalues (lambda = s^2/n).
LSTSQ_RCOND = 1e-5
# Alpha grid for the polynomial-rate constants; 0 is the range projector.
ALPHA_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
# Fixed stream for the population K quantile surrogate, so summaries are
# deterministic functions of Sigma.
_SURROGATE_SEED = 181607
_SURROGATE_DRAWS = 200_000
_SURROGATE_QUANTILE = 0.999


class Regime(Enum):
    EMPIRICAL = "empirical"
    POPULATION = "population"


class InputLaw(Enum):
    GAUSSIAN_CLOSED_FORM = "gaussian_closed_form"
    SAMPLE_BASED = "sample_based"


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PopulationModel:
    """Distribution-level description of the regression problem.

    Inputs are x ~ N(0, Sigma) and labels y = <x, theta_star> + xi with
    E[xi^2] = noise_variance (that is 2 sigma^2, twice the loss floor).
    With input_law SAMPLE_BASED a fixed pool of x-draws stands in for the
    Gaussian law; noise_floor_a is an optional uniform-ellipticity constant
    (sigma(theta) >= a I) used by diagnostic scale bounds.
    """

    Sigma: np.ndarray
    theta_star: np.ndarray
    noise_variance: float = 0.0
    input_law: InputLaw = InputLaw.GAUSSIAN_CLOSED_FORM
    pool: np.ndarray | None = None
    noise_floor_a: float | None = None

    def __post_init__(self):
        S = np.array(self.Sigma, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError("Sigma must be a square matrix")
        if not np.allclose(S, S.T, rtol=0, atol=1e-10 * max(np.abs(S).max(), 1.0)):
            raise ValueError("Sigma must be symmetric")
        S = (S + S.T) / 2.0  # exact symmetry so closed forms stay bitwise symmetric
        w = np.linalg.eigvalsh(S)
        if w.min() < -1e-10 * max(w.max(), 0.0):
            raise ValueError("Sigma must be positive semi-definite")
        object.__setattr__(self, "Sigma", _frozen(S))
        ts = np.array(self.theta_star, dtype=float)
        if ts.shape != (S.shape[0],):
            raise ValueError("theta_star must be a vector of length d")
        object.__setattr__(self, "theta_star", _frozen(ts))
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        if self.input_law is InputLaw.SAMPLE_BASED:
            if self.pool is None:
                raise ValueError("sample-based input law needs a pool of x draws")
            P = np.array(self.pool, dtype=float)
            if P.ndim != 2 or P.shape[1] != S.shape[0]:
                raise ValueError("pool must have shape (draws, d)")
            object.__setattr__(self, "pool", _frozen(P))
        elif self.pool is not None:
            raise ValueError("pool only makes sense with the sample-based law")
        if self.noise_floor_a is not None and self.noise_floor_a <= 0:
            raise ValueError("noise_floor_a must be positive when given")

    @property
    def d(self) -> int:
        return self.Sigma.shape[0]


@dataclass(frozen=True)
class ProblemInstance:
    """One experiment's worth of problem data.

    Exactly one of (X, y) or population_model is present, matching the regime.
    gamma is the nominal constant step size; n is the sample count (for
    population instances a nominal budget, kept >= 1).
    """

    regime: Regime
    theta0: np.ndarray
    gamma: float
    n: int
    d: int
    X: np.ndarray | None = None
    y: np.ndarray | None = None
    population_model: PopulationModel | None = None

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("need n >= 1 and d >= 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        t0 = np.array(self.theta0, dtype=float)
        if t0.shape != (self.d,):
            raise ValueError("theta0 must be a vector of length d")
        object.__setattr__(self, "theta0", _frozen(t0))
        has_data = self.X is not None or self.y is not None
        has_model = self.population_model is not None
        if self.regime is Regime.EMPIRICAL:
            if not (self.X is not None and self.y is not None) or has_model:
                raise ValueError("empirical regime carries (X, y) and no population model")
            X = np.array(self.X, dtype=float)
            yv = np.array(self.y, dtype=float)
            if X.shape != (self.n, self.d):
                raise ValueError("X must have shape (n, d)")
            if yv.shape != (self.n,):
                raise ValueError("y must be a vector of length n")
            object.__setattr__(self, "X", _frozen(X))
            object.__setattr__(self, "y", _frozen(yv))
        else:
            if has_data or not has_model:
                raise ValueError("population regime carries a population model and no (X, y)")
            if self.population_model.d != self.d:
                raise ValueError("population model dimension disagrees with d")


def empirical_instance(X, y, theta0, gamma) -> ProblemInstance:
    """Convenience constructor for the empirical regime."""
    X = np.asarray(X, dtype=float)
    return ProblemInstance(
        regime=Regime.EMPIRICAL, theta0=theta0, gamma=gamma,
        n=X.shape[0], d=X.shape[1], X=X, y=y,
    )


def population_instance(model: PopulationModel, theta0, gamma, n: int = 1) -> ProblemInstance:
    """Convenience constructor for the population regime; n is nominal."""
    return ProblemInstance(
        regime=Regime.POPULATION, theta0=theta0, gamma=gamma,
        n=n, d=model.d, population_model=model,
    )


@dataclass(frozen=True)
class SpectralSummary:
    """Eigenstructure of the design covariance, plus the bound constants.

    Sigma is X^T X / n in the empirical regime, the model covariance otherwise.
    mu is the smallest eigenvalue above the rank cutoff. K is the max squared
    row norm (empirical) or a 0.999-quantile surrogate for the almost-sure
    bound on ||x||^2 under the Gaussian law (population; Monte Carlo with a
    fixed internal seed, so the value is a deterministic function of Sigma).
    k_alpha maps alpha to max_i <x_i, Sigma^{-alpha} x_i> with the pseudo-power
    restricted to the range of Sigma (same quantile surrogate in the
    population regime); alpha = 0 gives the squared norm of the range
    projection of the worst row.
    """

    Sigma: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mu: float
    K: float
    k_alpha: dict
    rank: int


def loss(instance: ProblemInstance, theta) -> float | np.ndarray:
    """Average squared-error loss; accepts a single theta or a (..., d) batch."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1:] != (instance.d,):
        raise ValueError(f"theta has dimension {theta.shape[-1] if theta.ndim else 0}, expected {instance.d}")
    if instance.regime is Regime.EMPIRICAL:
        r = theta @ instance.X.T - instance.y
        out = 0.5 * np.mean(r * r, axis=-1)
    else:
        m = instance.population_model
        delta = theta - m.theta_star
        out = 0.5 * np.einsum("...i,ij,...j->...", delta, m.Sigma, delta) + 0.5 * m.noise_variance
    return float(out) if out.ndim == 0 else out


def interpolator(instance: ProblemInstance) -> np.ndarray:
    """The optimum the dynamics contract to.

    Empirical: the least-squares solution closest to theta0, i.e.
    X^+ y + (I - X^+ X) theta0, computed as theta0 plus the minimum-norm
    solution of X dtheta = y - X theta0. When interpolators exist this is the
    Euclidean projection of theta0 onto them. Population: theta_star.
    """
    if instance.regime is Regime.POPULATION:
        return instance.population_model.theta_star.copy()
    dtheta, *_ = np.linalg.lstsq(instance.X, instance.y - instance.X @ instance.theta0, rcond=LSTSQ_RCOND)
    return instance.theta0 + dtheta


def population_k_surrogate(Sigma, alpha: float | None = None) -> float:
    """Quantile stand-in for the boundedness constant under x ~ N(0, Sigma).

    Returns the 0.999 quantile of <x, Sigma^{-alpha} x> (alpha None or 0 means
    the plain squared norm on the range), estimated from a fixed-seed Monte
    Carlo of the chi-square mixture sum_k w_k z_k^2.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    w, _ = np.linalg.eigh(Sigma)
    w = w[::-1]
    cutoff = RANK_CUTOFF * max(w[0], 0.0)
    kept = w[w > cutoff]
    if alpha is None or alpha == 0:
        weights = kept
    else:
        weights = kept ** (1.0 - alpha)
    rng = np.random.default_rng(_SURROGATE_SEED)
    z = rng.standard_normal((_SURROGATE_DRAWS, kept.size))
    vals = (z * z) @ weights
    return float(np.quantile(vals, _SURROGATE_QUANTILE))


def spectral_summary(instance: ProblemInstance, alphas=(0.0,) + ALPHA_GRID) -> SpectralSummary:
    """Eigendecomposition with rank cutoff, plus mu, K, and the K_alpha family."""
    if instance.regime is Regime.EMPIRICAL:
        Sigma = instance.X.T @ instance.X / instance.n
    else:
        Sigma = instance.population_model.Sigma
    w, V = np.linalg.eigh(Sigma)
    w, V = w[::-1], V[:, ::-1]
    lam_max = w[0]
    if lam_max <= 0:
        raise ValueError("degenerate spectrum: the design covariance is zero")
    cutoff = RANK_CUTOFF * lam_max
    retained = w > cutoff
    rank = int(retained.sum())
    mu = float(w[:rank][-1])
    k_alpha = {}
    if instance.regime is Regime.EMPIRICAL:
        K = float(np.max(np.einsum("ij,ij->i", instance.X, instance.X)))
        # rows expressed in the retained eigenbasis; K_alpha is a weighted max
        P = instance.X @ V[:, :rank]
        Psq = P * P
        for a in alphas:
            k_alpha[float(a)] = float(np.max(Psq @ (w[:rank] ** (-float(a)))))
    else:
        K = population_k_surrogate(Sigma)
        for a in alphas:
            k_alpha[float(a)] = population_k_surrogate(Sigma, alpha=float(a))
    return SpectralSummary(
        Sigma=_frozen(Sigma), eigenvalues=_frozen(w), eigenvectors=_frozen(V),
        mu=mu, K=K, k_alpha=k_alpha, rank=rank,
    )


@dataclass(frozen=True)
class RegimeReport:
    """Whether the data can be fit exactly, and what the loss floor is.

    sigma_sq_floor is the minimal loss L(theta_star); interpolator_exists is
    the scale-relative zero test on that floor; kernel_dim is dim ker X (or
    dim ker Sigma) under the rank cutoff.
    """

    interpolator_exists: bool
    sigma_sq_floor: float
    kernel_dim: int


def classify_regime(instance: ProblemInstance) -> RegimeReport:
    """Split instances into interpolating and noisy, reporting the loss floor."""
    summary = spectral_summary(instance, alphas=(0.0,))
    floor = float(loss(instance, interpolator(instance)))
    if instance.regime is Regime.EMPIRICAL:
        scale = 1.0 + float(instance.y @ instance.y) / instance.n
    else:
        m = instance.population_model
        scale = 1.0 + float(m.theta_star @ m.Sigma @ m.theta_star) + m.noise_variance
    return RegimeReport(
        interpolator_exists=bool(floor <= 1e-10 * scale),
        sigma_sq_floor=floor,
        kernel_dim=instance.d - summary.rank,
    )


def to_json(instance: ProblemInstance) -> str:
    """Serialize an instance to the documented JSON schema.

    Field names: regime, X, y, sigma, theta_star, noise_variance, theta0,
    gamma; matrices row-major nested arrays. Population pools, the input law,
    the noise floor, and the nominal n are not part of the schema.
    """
    doc: dict = {"regime": instance.regime.value}
    if instance.regime is Regime.EMPIRICAL:
        doc["X"] = instance.X.tolist()
        doc["y"] = instance.y.tolist()
    else:
        m = instance.population_model
        doc["sigma"] = m.Sigma.tolist()
        doc["theta_star"] = m.theta_star.tolist()
        doc["noise_variance"] = m.noise_variance
    doc["theta0"] = instance.theta0.tolist()
    doc["gamma"] = instance.gamma
    return json.dumps(doc)


def from_json(text: str) -> ProblemInstance:
    """Inverse of to_json; population instances come back with nominal n = 1."""
    doc = json.loads(text)
    regime = Regime(doc["regime"])
    if regime is Regime.EMPIRICAL:
        return empirical_instance(doc["X"], doc["y"], doc["theta0"], doc["gamma"])
    model = PopulationModel(
        Sigma=doc["sigma"], theta_star=doc["theta_star"],
        noise_variance=doc["noise_variance"],
    )
    return population_instance(model, doc["theta0"], doc["gamma"])
