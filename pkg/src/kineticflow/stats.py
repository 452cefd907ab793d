"""Invariant-measure sampling, autocovariance estimation, mixing fits, KS tests.

The invariant law of the sphere velocity is sampled directly by importance
sampling: draw u from the ambient Gaussian, weight with 1/|u|, project to
the sphere.  Rejection is impossible here (the weight is unbounded near the
origin), so all downstream tests are gated on the effective sample size of
the self-normalized weights.
"""
from dataclasses import dataclass

import numpy as np

from .covariance import sample_gaussian
from .errors import (
    ConditionViolatedError,
    HorizonTooShortError,
    UnsupportedDimensionError,
)

#: two-sided two-sample KS coefficient at the 1 percent level
KS_COEFF_1PCT = float(np.sqrt(-0.5 * np.log(0.005)))


@dataclass
class WeightedSample:
    """Self-normalized importance sample of the invariant sphere law."""

    points: np.ndarray  # (n, N) unit rows
    weights: np.ndarray  # (n,), sums to one

    @property
    def ess(self):
        """Effective sample size (sum w)^2 / sum w^2 of the raw weights."""
        return float(1.0 / np.sum(self.weights**2))

    def resample(self, n, rng):
        """n equal-weight draws (multinomial) for stationary initial states."""
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.points[idx]


def sample_invariant_oracle(spec, n, rng):
    """Importance sample of the invariant measure: weight 1/|u|, project.

    Requires ambient dimension >= 3 so the weight has finite variance.
    """
    if spec.dim <= 2:
        raise UnsupportedDimensionError(
            f"invariant oracle needs dimension >= 3, got {spec.dim}"
        )
    if n < 1:
        raise ValueError("need at least one draw")
    u = sample_gaussian(spec, rng, n=n)
    norms = np.linalg.norm(u, axis=1)
    w = 1.0 / norms
    return WeightedSample(points=u / norms[:, None], weights=w / w.sum())


@dataclass
class KSResult:
    statistic: float
    threshold: float
    ess_a: float
    ess_b: float

    @property
    def passed(self):
        return self.statistic < self.threshold


def ks_statistic(a, b, w_a=None, w_b=None, level_coeff=KS_COEFF_1PCT):
    """Weighted two-sample Kolmogorov-Smirnov statistic and its threshold.

    The rejection threshold uses the effective sample sizes in the usual
    two-sample formula c(alpha) * sqrt(1/n_a + 1/n_b); with unit weights it
    reduces to the classical test.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(a) == 0 or len(b) == 0:
        raise ValueError("KS test needs nonempty samples")
    w_a = np.full(len(a), 1.0 / len(a)) if w_a is None else np.asarray(w_a, dtype=np.float64)
    w_b = np.full(len(b), 1.0 / len(b)) if w_b is None else np.asarray(w_b, dtype=np.float64)
    w_a = w_a / w_a.sum()
    w_b = w_b / w_b.sum()
    ess_a = 1.0 / np.sum(w_a**2)
    ess_b = 1.0 / np.sum(w_b**2)

    order_a = np.argsort(a, kind="stable")
    order_b = np.argsort(b, kind="stable")
    sa, ca = a[order_a], np.cumsum(w_a[order_a])
    sb, cb = b[order_b], np.cumsum(w_b[order_b])
    grid = np.concatenate([sa, sb])
    fa = np.concatenate([[0.0], ca])[np.searchsorted(sa, grid, side="right")]
    fb = np.concatenate([[0.0], cb])[np.searchsorted(sb, grid, side="right")]
    stat = float(np.abs(fa - fb).max())
    threshold = level_coeff * np.sqrt(1.0 / ess_a + 1.0 / ess_b)
    return KSResult(statistic=stat, threshold=float(threshold), ess_a=ess_a, ess_b=ess_b)


@dataclass
class AutocovCurve:
    """Velocity product moments E[v_0 v_lag] with standard errors.

    rho has shape (n_lags, N) for per-mode diagonals or (n_lags, N, N) when
    cross moments are requested; stderr matches.
    """

    lags: np.ndarray
    rho: np.ndarray
    stderr: np.ndarray

    @property
    def cross(self):
        return self.rho.ndim == 3

    def trace_curve(self):
        if self.cross:
            return np.trace(self.rho, axis1=1, axis2=2)
        return self.rho.sum(axis=1)


def autocovariance(times, ensemble, cross=False):
    """Per-mode product moments of an ensemble sampled at the given times.

    ensemble: (R, n_times, N) velocity states with row 0 the (stationary)
    initial condition; lag t compares column 0 with column t.
    """
    v = np.asarray(ensemble, dtype=np.float64)
    R = v.shape[0]
    v0 = v[:, 0, :]
    if cross:
        prod = v0[:, None, :, None] * v[:, :, None, :]  # (R, T, N, N)
    else:
        prod = v0[:, None, :] * v  # (R, T, N)
    rho = prod.mean(axis=0)
    stderr = prod.std(axis=0, ddof=1) / np.sqrt(R)
    return AutocovCurve(lags=np.asarray(times, dtype=np.float64), rho=rho, stderr=stderr)


def limit_covariance(curve, decay_sigmas=3.0):
    """Integrated-autocovariance matrix C_ij = int (rho_ij + rho_ji) dt.

    Trapezoid over the sampled lags plus an exponential tail extrapolated
    with the rate fitted on the trace curve; the result is symmetrized and
    projected to the positive semidefinite cone, with the projection defect
    reported.  Raises when the trace has not decayed below decay_sigmas
    standard errors at the last lag.
    """
    tr = curve.trace_curve()
    if curve.cross:
        se_tr = np.sqrt((curve.stderr**2).sum(axis=(1, 2)))
        rho = curve.rho
        sym = rho + np.swapaxes(rho, 1, 2)
    else:
        se_tr = np.sqrt((curve.stderr**2).sum(axis=1))
        rho = curve.rho
        sym = np.zeros((len(curve.lags), rho.shape[1], rho.shape[1]))
        idx = np.arange(rho.shape[1])
        sym[:, idx, idx] = 2.0 * rho

    if np.all(np.abs(tr) < 1e-14):
        N = sym.shape[1]
        return np.zeros((N, N)), {"tail_rate": np.inf, "tail_mass": 0.0, "psd_defect": 0.0}

    if abs(tr[-1]) > decay_sigmas * max(se_tr[-1], 1e-300):
        raise HorizonTooShortError(
            f"trace autocovariance {tr[-1]:.3g} still above {decay_sigmas} stderr at the last lag"
        )

    # fitted exponential rate on the positive, significant part of the trace
    mask = tr > np.maximum(5.0 * se_tr, 1e-12)
    mask &= curve.lags >= 0.0
    if mask.sum() >= 3:
        t_fit = curve.lags[mask]
        y_fit = np.log(tr[mask])
        slope = np.polyfit(t_fit, y_fit, 1)[0]
        rate = max(-slope, 1e-12)
    else:
        rate = np.inf

    integral = np.trapezoid(sym, curve.lags, axis=0)
    tail = sym[-1] / rate if np.isfinite(rate) else np.zeros_like(sym[-1])
    C = integral + tail
    C = 0.5 * (C + C.T)
    evals, evecs = np.linalg.eigh(C)
    clipped = np.clip(evals, 0.0, None)
    C_psd = (evecs * clipped) @ evecs.T
    C_psd = 0.5 * (C_psd + C_psd.T)
    defect = float(np.linalg.norm(C_psd - C) / max(np.linalg.norm(C), 1e-300))
    info = {
        "tail_rate": float(rate),
        "tail_mass": float(np.linalg.norm(tail)),
        "psd_defect": defect,
    }
    return C_psd, info


@dataclass
class MixingFit:
    slope: float
    slope_stderr: float
    tau_hat: float
    margin: float
    bound_satisfied: bool
    degenerate: bool


def mixing_decay_fit(times, n_t, margin, stderr_tolerance=2.0):
    """Least-squares slope of log E[N_t] against the coupling bound -margin.

    n_t: (R, n_times) ensemble traces of N_t.  Returns the fitted rate, the
    implied Wasserstein time constant tau_hat = 2/|slope|, and whether
    slope <= -margin + tol * stderr.  Pairs started equal give N == 0 and a
    degenerate fit flag instead of a rate.
    """
    if margin <= 0.0:
        raise ConditionViolatedError(
            f"trace-condition margin {margin:.3g} is not positive; no decay bound is claimed"
        )
    n_t = np.asarray(n_t, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    mean = n_t.mean(axis=0)
    se = n_t.std(axis=0, ddof=1) / np.sqrt(n_t.shape[0])
    if mean.max() < 1e-14:
        return MixingFit(np.nan, np.nan, np.nan, margin, False, True)

    mask = mean > np.maximum(5.0 * se, 1e-12)
    t_fit, y = times[mask], np.log(mean[mask])
    if mask.sum() < 3:
        return MixingFit(np.nan, np.nan, np.nan, margin, False, True)
    A = np.stack([t_fit, np.ones_like(t_fit)], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    dof = max(len(t_fit) - 2, 1)
    resid_var = float(res[0]) / dof if len(res) else float(np.sum((A @ coef - y) ** 2)) / dof
    slope_se = float(np.sqrt(resid_var / np.sum((t_fit - t_fit.mean()) ** 2)))
    ok = slope <= -margin + stderr_tolerance * slope_se
    tau_hat = 2.0 / abs(slope)
    return MixingFit(slope, slope_se, tau_hat, margin, bool(ok), False)


@dataclass
class MeanDecay:
    times: np.ndarray
    norms: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    satisfied: bool


def mean_decay_curve(times, ensemble, tau_hat, stderr_tolerance=3.0):
    """Norm of the ensemble-mean velocity against the bound 2 exp(-t/tau).

    ensemble: (R, n_times, N) from a fixed initial state.  The standard
    error of the norm is the first-order propagation through the mean.
    """
    v = np.asarray(ensemble, dtype=np.float64)
    R = v.shape[0]
    mean = v.mean(axis=0)  # (T, N)
    norms = np.linalg.norm(mean, axis=1)
    comp_se = v.std(axis=0, ddof=1) / np.sqrt(R)
    stderr = np.sqrt((comp_se**2).sum(axis=1))
    times = np.asarray(times, dtype=np.float64)
    bound = 2.0 * np.exp(-times / tau_hat)
    ok = bool(np.all(norms <= bound + stderr_tolerance * stderr))
    return MeanDecay(times=times, norms=norms, stderr=stderr, bound=bound, satisfied=ok)
