"""Time stepping for the spherical velocity SDE, its lift, positions and couplings.

Scheme: Euler-Maruyama on the Ito form of the sphere equation

    dv = -(sigma^2/2) (tr(C) v + C v - 2 (v, C v) v) dt + sigma (dW - (v, dW) v)

followed by renormalization to the unit sphere, which enforces the
constraint exactly at every stored time.  Positions integrate the velocity
with the trapezoid rule on the same grid.  The rescaled position process on
[0, 1] is produced by running the unit-speed velocity to horizon sigma^4
and scaling by sigma^{-2} (a law identity that avoids stiff stepping).

Ensembles run one counter-based stream per replica (see _rng);
``simulate_*`` functions take integer seeds, never shared generator state.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._rng import derive_stream_seed, stream_keys
from .errors import (
    DegenerateNormError,
    DimensionMismatchError,
    InvalidStepError,
    StepFailureError,
)

DT_CAP = 1e-3


def default_dt(sigma, trace):
    """Step size keeping the drift a per-step contraction: min(1e-3, 0.1/(sigma^2 tr))."""
    if sigma <= 0.0:
        return DT_CAP
    return min(DT_CAP, 0.1 / (sigma * sigma * trace))


@dataclass
class SphereTrajectory:
    """Unit-sphere velocity path, optionally with its integrated position."""

    times: np.ndarray
    v: np.ndarray  # (n_times, N)
    sigma: float
    x: np.ndarray = None  # (n_times, N) or None

    @property
    def dim(self):
        return self.v.shape[1]

    def max_norm_drift(self):
        return float(np.abs(np.linalg.norm(self.v, axis=1) - 1.0).max())


@dataclass
class CoupledPairTrajectory:
    """Synchronously coupled pair: per-time half squared distance N_t."""

    times: np.ndarray
    n_t: np.ndarray  # (R, n_times) ensemble trace of N_t = 1 - (v, w)


@dataclass
class RescaledEnsemble:
    """Checkpoint data of the rescaled position process on [0, 1].

    x holds X^sigma_t - X^sigma_0 per replica and checkpoint; xx holds the
    running level-2 tensors int_0^t (X_u - X_0) (x) dX_u in rescaled time,
    enough to assemble rough-path increments over any checkpoint pair.
    """

    times: np.ndarray  # (C,) rescaled times in [0, 1]
    v: np.ndarray      # (R, C, N) unit-speed velocity at the checkpoints
    x: np.ndarray      # (R, C, N)
    xx: np.ndarray     # (R, C, N, N) or None
    sigma: float


def _checkpoints(n_steps, save_stride):
    idx = np.arange(0, n_steps + 1, save_stride, dtype=np.int64)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def _validate_step(dt, T):
    if dt <= 0.0:
        raise InvalidStepError(f"dt must be positive, got {dt}")
    if T < 0.0:
        raise InvalidStepError(f"horizon must be non-negative, got {T}")


def _check_status(status):
    if (status == _kernels.STATUS_STEP_FAILURE).any():
        raise StepFailureError(
            f"{int((status == 1).sum())} replica(s) hit a near-zero norm; reduce dt"
        )
    if (status == _kernels.STATUS_DEGENERATE).any():
        raise DegenerateNormError(
            f"{int((status == 2).sum())} lift replica(s) fell below the {_kernels.LIFT_FLOOR} floor"
        )


def velocity_step(v, spec, sigma, dt, dW):
    """One Euler-Maruyama step + renormalization for an explicit increment."""
    v = np.asarray(v, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64)
    if v.shape != dW.shape or v.shape[-1] != spec.dim:
        raise DimensionMismatchError("v and dW must both match the spectrum dimension")
    if dt <= 0.0:
        raise InvalidStepError(f"dt must be positive, got {dt}")
    alpha2 = spec.alpha**2
    cvv = np.sum(alpha2 * v * v, axis=-1, keepdims=True)
    vdW = np.sum(v * dW, axis=-1, keepdims=True)
    out = v - 0.5 * sigma**2 * (spec.trace + alpha2 - 2.0 * cvv) * v * dt + sigma * (dW - vdW * v)
    nrm = np.linalg.norm(out, axis=-1, keepdims=True)
    if (nrm < 1e-12).any():
        raise StepFailureError("intermediate state has near-zero norm; reduce dt")
    return out / nrm


def simulate_velocity(v0, spec, sigma, T, dt, seed, save_stride=1):
    """Single velocity trajectory on [0, T], states saved every save_stride steps."""
    traj = simulate_velocity_ensemble(
        np.asarray(v0, dtype=np.float64)[None, :], spec, sigma, T, dt, seed, save_stride
    )
    return SphereTrajectory(times=traj[0], v=traj[1][0], sigma=sigma)


def simulate_velocity_ensemble(v0s, spec, sigma, T, dt, root_seed, save_stride=1, chk_idx=None):
    """(times, V[R, C, N]) for R independent replicas under one root seed."""
    _validate_step(dt, T)
    v0s = np.ascontiguousarray(v0s, dtype=np.float64)
    if v0s.shape[1] != spec.dim:
        raise DimensionMismatchError(f"v0 dimension {v0s.shape[1]} != spectrum {spec.dim}")
    n_steps = int(round(T / dt))
    if chk_idx is None:
        chk_idx = _checkpoints(n_steps, save_stride)
    keys = stream_keys(root_seed, len(v0s))
    out, status = _kernels.velocity_paths(keys, v0s, spec.alpha, float(sigma), float(dt), n_steps, chk_idx)
    _check_status(status)
    return chk_idx * dt, out


def simulate_position(v0, x0, spec, sigma, T, dt, seed, save_stride=1):
    """Velocity plus trapezoid position on [0, T] at native speed sigma."""
    _validate_step(dt, T)
    v0 = np.asarray(v0, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    n_steps = int(round(T / dt))
    chk_idx = _checkpoints(n_steps, save_stride)
    keys = stream_keys(seed, 1)
    v_chk, x_chk, _, status = _kernels.position_paths(
        keys, v0[None, :], spec.alpha, float(sigma), float(dt), n_steps, chk_idx, False
    )
    _check_status(status)
    return SphereTrajectory(times=chk_idx * dt, v=v_chk[0], sigma=sigma, x=x0 + x_chk[0])


def rescaled_position_ensemble(
    spec, sigma, n_replicas, root_seed, dt, checkpoint_times, v0s=None, with_level2=True
):
    """Ensemble of X^sigma on [0, 1] via the sigma^4-horizon identity.

    checkpoint_times are rescaled times in [0, 1]; the unit-speed SDE runs
    to horizon sigma^4 with step dt and positions/level-2 tensors are
    accumulated on the fly.  v0s defaults to the deterministic first basis
    vector; pass stationary draws for homogenization statistics.
    """
    _validate_step(dt, 1.0)
    if sigma <= 0.0:
        raise InvalidStepError("rescaled process needs sigma > 0")
    horizon = sigma**4
    n_steps = int(round(horizon / dt))
    t_chk = np.asarray(checkpoint_times, dtype=np.float64)
    chk_idx = np.unique(np.round(t_chk * n_steps).astype(np.int64))
    if len(chk_idx) != len(t_chk):
        raise InvalidStepError("checkpoint times collide on the step grid; reduce dt")
    if v0s is None:
        v0s = np.zeros((n_replicas, spec.dim))
        v0s[:, 0] = 1.0
    v0s = np.ascontiguousarray(v0s, dtype=np.float64)
    keys = stream_keys(root_seed, n_replicas)
    v_chk, x_chk, xx_chk, status = _kernels.position_paths(
        keys, v0s, spec.alpha, 1.0, float(dt), n_steps, chk_idx, bool(with_level2)
    )
    _check_status(status)
    scale = 1.0 / sigma**2
    return RescaledEnsemble(
        times=chk_idx.astype(np.float64) / n_steps,
        v=v_chk,
        x=x_chk * scale,
        xx=xx_chk * scale**2 if with_level2 else None,
        sigma=sigma,
    )


def simulate_lift(u0, spec, sigma, T, dt, seed, save_stride=1):
    """Trajectory of the norm-carrying lift in H minus the origin."""
    _validate_step(dt, T)
    u0 = np.asarray(u0, dtype=np.float64)
    if np.linalg.norm(u0) == 0.0:
        raise DegenerateNormError("lift initial condition must be nonzero")
    n_steps = int(round(T / dt))
    chk_idx = _checkpoints(n_steps, save_stride)
    keys = stream_keys(seed, 1)
    out, status = _kernels.lift_paths(
        keys, u0[None, :], spec.alpha, float(sigma), float(dt), n_steps, chk_idx
    )
    _check_status(status)
    return chk_idx * dt, out[0]


def simulate_lift_ensemble(u0s, spec, sigma, T, dt, root_seed, save_stride=1):
    _validate_step(dt, T)
    u0s = np.ascontiguousarray(u0s, dtype=np.float64)
    n_steps = int(round(T / dt))
    chk_idx = _checkpoints(n_steps, save_stride)
    keys = stream_keys(root_seed, len(u0s))
    out, status = _kernels.lift_paths(
        keys, u0s, spec.alpha, float(sigma), float(dt), n_steps, chk_idx
    )
    _check_status(status)
    return chk_idx * dt, out


def simulate_coupled_pair(v0, w0, spec, T, dt, seed, save_stride=1):
    """One synchronously coupled pair at unit speed; records N_t each save."""
    times, n_t = simulate_coupled_ensemble(
        np.asarray(v0, dtype=np.float64)[None, :],
        np.asarray(w0, dtype=np.float64)[None, :],
        spec, T, dt, seed, save_stride,
    )
    return CoupledPairTrajectory(times=times, n_t=n_t)


def simulate_coupled_ensemble(v0s, w0s, spec, T, dt, root_seed, save_stride=1):
    """Ensemble of coupled pairs driven by identical per-replica noise."""
    _validate_step(dt, T)
    v0s = np.ascontiguousarray(v0s, dtype=np.float64)
    w0s = np.ascontiguousarray(w0s, dtype=np.float64)
    if v0s.shape != w0s.shape:
        raise DimensionMismatchError("v0s and w0s must have identical shapes")
    n_steps = int(round(T / dt))
    keys = stream_keys(root_seed, len(v0s))
    n_t, status = _kernels.coupled_paths(
        keys, v0s, w0s, spec.alpha, float(dt), n_steps, int(save_stride)
    )
    _check_status(status)
    times = np.arange(0, n_steps + 1, save_stride, dtype=np.float64) * dt
    return times[: n_t.shape[1]], n_t


__all__ = [
    "SphereTrajectory",
    "CoupledPairTrajectory",
    "RescaledEnsemble",
    "default_dt",
    "derive_stream_seed",
    "velocity_step",
    "simulate_velocity",
    "simulate_velocity_ensemble",
    "simulate_position",
    "rescaled_position_ensemble",
    "simulate_lift",
    "simulate_lift_ensemble",
    "simulate_coupled_pair",
    "simulate_coupled_ensemble",
]
