"""Covariance spectra, trace condition, Gaussian sampling and norm functionals.

Computational coordinates are taken in the Sobolev-orthonormal basis, so the
unit sphere of the state space is the standard Euclidean sphere and the
orthogonal projection away from a vector is the usual one.  In these
coordinates the noise covariance is diagonal with per-mode variances
alpha_n^2; for spectra built from a mode table, alpha_n^2 = |lambda_n|^{-a}.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidExponentError, InvalidStepError


@dataclass(frozen=True)
class CovarianceSpectrum:
    """Per-mode noise standard deviations plus the exponents that built them.

    eigenvalues holds |lambda_n| per mode (ones for the abstract isotropic
    case) and is what the L2 / H^{s+a} functionals weight with.
    """

    alpha: np.ndarray
    s: float
    a: float
    eigenvalues: np.ndarray

    @property
    def dim(self):
        return len(self.alpha)

    @property
    def trace(self):
        return float(np.sum(self.alpha**2))

    @property
    def alpha_max_sq(self):
        return float(np.max(self.alpha**2))


def sobolev_spectrum(table, a, s=2.0):
    """alpha_n = |lambda_n|^{-a/2} for every mode of the table.

    Requires a > 1/2 so the full (untruncated) covariance is trace class on
    the 2-torus.
    """
    if a <= 0.5:
        raise InvalidExponentError(f"roughness exponent must be > 1/2, got {a}")
    lam = table.eigenvalues
    return CovarianceSpectrum(alpha=lam ** (-a / 2.0), s=float(s), a=float(a), eigenvalues=lam)


def isotropic_spectrum(d, alpha=None):
    """Abstract R^d case: identity covariance, or explicit per-mode alphas."""
    if alpha is None:
        alpha = np.ones(d)
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (d,):
        raise DimensionMismatchError(f"expected {d} alphas, got shape {alpha.shape}")
    return CovarianceSpectrum(alpha=alpha, s=0.0, a=0.0, eigenvalues=np.ones(d))


@dataclass(frozen=True)
class TraceCondition:
    margin: float
    satisfied: bool


def trace_condition(spec):
    """Margin tr - 3 * max(alpha^2) and its sign.

    A strictly positive margin is what the exponential mixing bound needs;
    the margin itself goes into experiment metadata.
    """
    margin = spec.trace - 3.0 * spec.alpha_max_sq
    return TraceCondition(margin=margin, satisfied=margin > 0.0)


def sample_gaussian(spec, rng, n=None):
    """Mean-zero Gaussian draws with per-mode std alpha_n; (n, N) or (N,)."""
    shape = (spec.dim,) if n is None else (n, spec.dim)
    return rng.standard_normal(shape) * spec.alpha


def brownian_increment(spec, dt, rng, n=None):
    """Brownian increments over dt: per-mode variance alpha_n^2 * dt."""
    if dt <= 0.0:
        raise InvalidStepError(f"dt must be positive, got {dt}")
    return sample_gaussian(spec, rng, n) * np.sqrt(dt)


def hs_norm(x):
    """Sphere norm of computational coordinates (plain Euclidean)."""
    return float(np.linalg.norm(x))


def l2_norm(x, spec):
    """L2 norm: weights |lambda_n|^{-s} on squared coordinates."""
    return float(np.sqrt(q0(x, spec)))


def q0(x, spec):
    """Quadratic form returning the squared L2 norm of sphere coordinates."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(spec.eigenvalues ** (-spec.s) * x * x))


def hsa_norm(x, spec):
    """Norm one roughness order above the state space: weights |lambda_n|^{a}."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.sum(spec.eigenvalues**spec.a * x * x)))


def to_l2(x, spec):
    """Convert sphere coordinates to L2-orthonormal coefficients."""
    x = np.asarray(x, dtype=np.float64)
    return x * spec.eigenvalues ** (-spec.s / 2.0)
