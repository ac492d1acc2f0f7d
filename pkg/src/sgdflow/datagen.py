"""Synthetic least-squares instances with controlled spectra and noise.

Rows are Gaussian with a covariance built from a chosen eigenvalue profile;
labels come from a hidden parameter, either fit exactly (interpolating) or
corrupted by additive Gaussian noise whose variance is twice the requested
loss floor, so Additive(sigma_sq=1) puts the optimal loss at exactly 1.
Everything is a pure function of the spec, bitwise reproducible by seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .problems import (InputLaw, PopulationModel, ProblemInstance,
                       empirical_instance, population_instance,
                       population_k_surrogate)


class SpectrumKind(Enum):
    POWER_LAW = "power_law"
    FLAT = "flat"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalue profile of the design covariance, largest first."""

    kind: SpectrumKind
    exponent: float | None = None
    values: tuple | None = None

    @staticmethod
    def power_law(exponent: float) -> "Spectrum":
        if exponent <= 0:
            raise ValueError("power-law exponent must be positive")
        return Spectrum(kind=SpectrumKind.POWER_LAW, exponent=float(exponent))

    @staticmethod
    def flat() -> "Spectrum":
        return Spectrum(kind=SpectrumKind.FLAT)

    @staticmethod
    def explicit(values) -> "Spectrum":
        vals = tuple(float(v) for v in values)
        if not vals:
            raise ValueError("explicit spectrum needs at least one eigenvalue")
        if any(v < 0 for v in vals):
            raise ValueError("eigenvalues must be nonnegative")
        return Spectrum(kind=SpectrumKind.EXPLICIT, values=vals)


class NoiseKind(Enum):
    INTERPOLATING = "interpolating"
    ADDITIVE = "additive"


@dataclass(frozen=True)
class NoiseModel:
    """Label law: exact fit, or additive Gaussian with a chosen loss floor.

    sigma_sq is the floor itself; labels are drawn with variance 2 sigma_sq.
    theta_true of None means a unit-norm draw from the instance seed.
    """

    kind: NoiseKind
    sigma_sq: float = 0.0
    theta_true: tuple | None = None

    @staticmethod
    def interpolating(theta_true=None) -> "NoiseModel":
        return NoiseModel(kind=NoiseKind.INTERPOLATING,
                          theta_true=None if theta_true is None else tuple(map(float, theta_true)))

    @staticmethod
    def additive(sigma_sq: float, theta_true=None) -> "NoiseModel":
        if sigma_sq < 0:
            raise ValueError("sigma_sq must be nonnegative")
        return NoiseModel(kind=NoiseKind.ADDITIVE, sigma_sq=float(sigma_sq),
                          theta_true=None if theta_true is None else tuple(map(float, theta_true)))


@dataclass(frozen=True)
class GeneratorSpec:
    """Everything needed to rebuild one instance: sizes, spectrum, noise, seed."""

    n: int
    d: int
    spectrum: Spectrum
    noise_model: NoiseModel
    seed: int

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("need n >= 1 and d >= 1")
        if (self.spectrum.kind is SpectrumKind.EXPLICIT
                and len(self.spectrum.values) != self.d):
            raise ValueError(f"explicit spectrum has {len(self.spectrum.values)} "
                             f"eigenvalues but d={self.d}")
        if (self.noise_model.theta_true is not None
                and len(self.noise_model.theta_true) != self.d):
            raise ValueError("theta_true length must equal d")


def spectrum_eigenvalues(spec: GeneratorSpec) -> np.ndarray:
    """Design eigenvalues for the spec, lambda_1 = 1 for the built-in profiles."""
    s = spec.spectrum
    if s.kind is SpectrumKind.POWER_LAW:
        return np.arange(1, spec.d + 1, dtype=float) ** (-s.exponent)
    if s.kind is SpectrumKind.FLAT:
        return np.ones(spec.d)
    return np.array(s.values, dtype=float)


def _draw_structure(spec: GeneratorSpec):
    """Shared draws: orthogonal basis, covariance, hidden parameter."""
    rng = np.random.default_rng(spec.seed)
    lam = spectrum_eigenvalues(spec)
    Q, R = np.linalg.qr(rng.standard_normal((spec.d, spec.d)))
    Q = Q * np.sign(np.diag(R))
    Sigma = (Q * lam) @ Q.T
    Sigma = (Sigma + Sigma.T) / 2.0
    if spec.noise_model.theta_true is not None:
        theta_true = np.array(spec.noise_model.theta_true, dtype=float)
    else:
        v = rng.standard_normal(spec.d)
        theta_true = v / np.linalg.norm(v)
    return rng, lam, Q, Sigma, theta_true


def _resolve_gamma(gamma, gamma_fraction, K):
    if gamma is not None and gamma_fraction is not None:
        raise ValueError("give gamma or gamma_fraction, not both")
    if gamma is not None:
        return float(gamma)
    frac = 0.3 if gamma_fraction is None else float(gamma_fraction)
    return frac / (3.0 * K)


def generate_empirical(spec: GeneratorSpec, gamma: float | None = None,
                       gamma_fraction: float | None = None,
                       theta0=None) -> ProblemInstance:
    """Finite design: rows i.i.d. N(0, Sigma_spec), labels per the noise model.

    Step size comes either explicitly or as a fraction of the stability
    threshold 1/(3 max_i ||x_i||^2) of the realized design; the fraction
    defaults to 0.3. theta0 defaults to the origin.
    """
    rng, lam, Q, Sigma, theta_true = _draw_structure(spec)
    Z = rng.standard_normal((spec.n, spec.d))
    X = (Z * np.sqrt(lam)) @ Q.T
    y = X @ theta_true
    if spec.noise_model.kind is NoiseKind.ADDITIVE and spec.noise_model.sigma_sq > 0:
        y = y + np.sqrt(2.0 * spec.noise_model.sigma_sq) * rng.standard_normal(spec.n)
    K_hat = float(np.max(np.einsum("ij,ij->i", X, X)))
    g = _resolve_gamma(gamma, gamma_fraction, K_hat)
    t0 = np.zeros(spec.d) if theta0 is None else np.asarray(theta0, dtype=float)
    return empirical_instance(X, y, theta0=t0, gamma=g)


def generate_population(spec: GeneratorSpec, gamma: float | None = None,
                        gamma_fraction: float | None = None,
                        theta0=None, n: int | None = None) -> ProblemInstance:
    """Infinite-data twin: the model keeps Sigma_spec and theta_true exactly.

    Noise variance is 2 sigma_sq so the loss floor equals sigma_sq. Fractional
    step sizes use the high-quantile surrogate for the row-norm ceiling, since
    Gaussian inputs are unbounded. n is nominal (bookkeeping only).
    """
    _, lam, Q, Sigma, theta_true = _draw_structure(spec)
    nv = (2.0 * spec.noise_model.sigma_sq
          if spec.noise_model.kind is NoiseKind.ADDITIVE else 0.0)
    model = PopulationModel(Sigma=Sigma, theta_star=theta_true, noise_variance=nv,
                            input_law=InputLaw.GAUSSIAN_CLOSED_FORM)
    if gamma is None:
        K = population_k_surrogate(Sigma)
    else:
        K = None
    g = _resolve_gamma(gamma, gamma_fraction, K)
    t0 = np.zeros(spec.d) if theta0 is None else np.asarray(theta0, dtype=float)
    return population_instance(model, theta0=t0, gamma=g,
                               n=1 if n is None else int(n))
