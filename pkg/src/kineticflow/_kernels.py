"""Hot numeric kernels: numba-compiled with a pure-numpy fallback.

Backend selection: numba is used when importable unless the environment
variable ``KINETICFLOW_NUMBA`` is set to ``0``/``false``/``no``/``off``.
Both implementations are importable directly (``nb_*`` / ``np_*``) for the
benchmark and the cross-checking tests; the module-level names bind to the
selected backend.

All stochastic kernels draw their normals from the counter-based generator
of :mod:`kineticflow._rng`: replica r consumes variate counters
``step * N + i`` under its own stream key, so results do not depend on
scheduling.  The numpy twins step all replicas synchronously and reproduce
the same streams (trajectories agree to floating-point roundoff; chaotic
divergence makes long-horizon paths backend-specific, statistics are not).

Status codes returned by the SDE kernels: 0 ok, 1 velocity step produced a
near-zero norm (reduce dt), 2 lift norm fell below the 1e-8 floor.
"""
import os

import numpy as np

from ._rng import GOLDEN, MIX_A, MIX_B, normals

_FLAG = os.environ.get("KINETICFLOW_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "false", "no", "off")

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag instead
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _WANT_NUMBA
BACKEND = "numba" if USE_NUMBA else "numpy"

_INV_2_53 = 1.0 / 9007199254740992.0
STATUS_OK = 0
STATUS_STEP_FAILURE = 1
STATUS_DEGENERATE = 2
LIFT_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# numpy fallback implementations (replica-vectorized)
# ---------------------------------------------------------------------------

def _np_step_noise(keys, step, N):
    """(R, N) standard normals for all replicas at one step."""
    ctr = np.uint64(step) * np.uint64(N) + np.arange(N, dtype=np.uint64)
    return normals(keys[:, None], ctr[None, :])


def np_velocity_paths(keys, v0s, alpha, sigma, dt, n_steps, chk_idx):
    R, N = v0s.shape
    out = np.empty((R, len(chk_idx), N))
    status = np.zeros(R, dtype=np.int8)
    v = v0s.copy()
    trace = float(np.sum(alpha * alpha))
    sq = np.sqrt(dt)
    row = 0
    if chk_idx[0] == 0:
        out[:, 0] = v
        row = 1
    for step in range(n_steps):
        cvv = (alpha**2 * v**2).sum(axis=1, keepdims=True)
        dW = alpha * sq * _np_step_noise(keys, step, N)
        vdW = (v * dW).sum(axis=1, keepdims=True)
        drift = -0.5 * sigma * sigma * (trace + alpha**2 - 2.0 * cvv) * v * dt
        v = v + drift + sigma * (dW - vdW * v)
        nrm = np.linalg.norm(v, axis=1, keepdims=True)
        bad = nrm[:, 0] < 1e-12
        if bad.any():
            status[bad] = STATUS_STEP_FAILURE
            nrm[bad] = 1.0
        v = v / nrm
        if row < len(chk_idx) and step + 1 == chk_idx[row]:
            out[:, row] = v
            row += 1
    return out, status


def np_position_paths(keys, v0s, alpha, sigma, dt, n_steps, chk_idx, with_level2):
    R, N = v0s.shape
    C = len(chk_idx)
    v_chk = np.empty((R, C, N))
    x_chk = np.empty((R, C, N))
    xx_chk = np.zeros((R, C, N, N)) if with_level2 else np.zeros((R, 1, 1, 1))
    status = np.zeros(R, dtype=np.int8)
    v = v0s.copy()
    x = np.zeros((R, N))
    xx = np.zeros((R, N, N)) if with_level2 else None
    trace = float(np.sum(alpha * alpha))
    sq = np.sqrt(dt)
    row = 0
    if chk_idx[0] == 0:
        v_chk[:, 0] = v
        x_chk[:, 0] = x
        row = 1
    for step in range(n_steps):
        vprev = v
        xprev = x
        cvv = (alpha**2 * v**2).sum(axis=1, keepdims=True)
        dW = alpha * sq * _np_step_noise(keys, step, N)
        vdW = (v * dW).sum(axis=1, keepdims=True)
        drift = -0.5 * sigma * sigma * (trace + alpha**2 - 2.0 * cvv) * v * dt
        v = v + drift + sigma * (dW - vdW * v)
        nrm = np.linalg.norm(v, axis=1, keepdims=True)
        bad = nrm[:, 0] < 1e-12
        if bad.any():
            status[bad] = STATUS_STEP_FAILURE
            nrm[bad] = 1.0
        v = v / nrm
        x = xprev + 0.5 * dt * (vprev + v)
        if with_level2:
            xx = xx + 0.5 * dt * (
                xprev[:, :, None] * vprev[:, None, :] + x[:, :, None] * v[:, None, :]
            )
        if row < C and step + 1 == chk_idx[row]:
            v_chk[:, row] = v
            x_chk[:, row] = x
            if with_level2:
                xx_chk[:, row] = xx
            row += 1
    return v_chk, x_chk, xx_chk, status


def np_coupled_paths(keys, v0s, w0s, alpha, dt, n_steps, save_stride):
    R, N = v0s.shape
    n_saved = n_steps // save_stride + 1
    n_out = np.empty((R, n_saved))
    status = np.zeros(R, dtype=np.int8)
    v = v0s.copy()
    w = w0s.copy()
    trace = float(np.sum(alpha * alpha))
    sq = np.sqrt(dt)
    n_out[:, 0] = 1.0 - (v * w).sum(axis=1)
    row = 1
    for step in range(n_steps):
        dW = alpha * sq * _np_step_noise(keys, step, N)
        for pair in (0, 1):
            y = v if pair == 0 else w
            cyy = (alpha**2 * y**2).sum(axis=1, keepdims=True)
            ydW = (y * dW).sum(axis=1, keepdims=True)
            y = y + -0.5 * (trace + alpha**2 - 2.0 * cyy) * y * dt + (dW - ydW * y)
            nrm = np.linalg.norm(y, axis=1, keepdims=True)
            bad = nrm[:, 0] < 1e-12
            if bad.any():
                status[bad] = STATUS_STEP_FAILURE
                nrm[bad] = 1.0
            y = y / nrm
            if pair == 0:
                v = y
            else:
                w = y
        if (step + 1) % save_stride == 0:
            n_out[:, row] = 1.0 - (v * w).sum(axis=1)
            row += 1
    return n_out, status


def np_lift_paths(keys, u0s, alpha, sigma, dt, n_steps, chk_idx):
    R, N = u0s.shape
    out = np.empty((R, len(chk_idx), N))
    status = np.zeros(R, dtype=np.int8)
    u = u0s.copy()
    sq = np.sqrt(dt)
    row = 0
    if chk_idx[0] == 0:
        out[:, 0] = u
        row = 1
    for step in range(n_steps):
        nrm2 = (u * u).sum(axis=1, keepdims=True)
        nrm = np.sqrt(nrm2)
        xi = _np_step_noise(keys, step, N)
        u = u + 0.5 * sigma * sigma * (-nrm2 + alpha**2) * u * dt + sigma * nrm * alpha * sq * xi
        low = np.linalg.norm(u, axis=1) < LIFT_FLOOR
        if low.any():
            status[low] = STATUS_DEGENERATE
        if row < len(chk_idx) and step + 1 == chk_idx[row]:
            out[:, row] = u
            row += 1
    return out, status


def np_field_eval(coeffs, kvecs, pts, drift):
    """Velocity field of L2-orthonormal coefficients at points (P, 2).

    drift is a constant (2,) vector added everywhere; it lets tests drive
    rigid translations, which the divergence-free basis cannot express.
    """
    norm_const = 1.0 / (np.pi * np.sqrt(2.0))
    phase = pts[:, 0, None] * kvecs[None, :, 0] + pts[:, 1, None] * kvecs[None, :, 1]
    norms = np.hypot(kvecs[:, 0], kvecs[:, 1])
    amp = (coeffs[0::2] * np.cos(phase) + coeffs[1::2] * np.sin(phase)) * (norm_const / norms)
    return np.stack([amp @ kvecs[:, 1] + drift[0], -(amp @ kvecs[:, 0]) + drift[1]], axis=-1)


def np_advect_rk4(pts, kvecs, c0, cmid, c1, dt, drift):
    """One classical 4-stage step for every particle, in place."""
    k1 = np_field_eval(c0, kvecs, pts, drift)
    k2 = np_field_eval(cmid, kvecs, pts + 0.5 * dt * k1, drift)
    k3 = np_field_eval(cmid, kvecs, pts + 0.5 * dt * k2, drift)
    k4 = np_field_eval(c1, kvecs, pts + dt * k3, drift)
    pts += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return pts


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _U = np.uint64

    @njit(cache=True, inline="always")
    def _mix64(z):
        z = (z ^ (z >> _U(30))) * MIX_A
        z = (z ^ (z >> _U(27))) * MIX_B
        return z ^ (z >> _U(31))

    @njit(cache=True, inline="always")
    def _normal(key, counter):
        c2 = _U(2) * counter
        u1 = _mix64(key + (c2 + _U(1)) * GOLDEN)
        u2 = _mix64(key + (c2 + _U(2)) * GOLDEN)
        x1 = (np.float64(u1 >> _U(11)) + 0.5) * _INV_2_53
        x2 = np.float64(u2 >> _U(11)) * _INV_2_53
        return np.sqrt(-2.0 * np.log(x1)) * np.cos(2.0 * np.pi * x2)

    @njit(cache=True)
    def _nb_velocity_one(key, v, alpha, sigma, dt, n_steps, chk_idx, out, status, r):
        N = v.shape[0]
        trace = 0.0
        for i in range(N):
            trace += alpha[i] * alpha[i]
        sq = np.sqrt(dt)
        row = 0
        if chk_idx[0] == 0:
            for i in range(N):
                out[0, i] = v[i]
            row = 1
        dW = np.empty(N)
        for step in range(n_steps):
            cvv = 0.0
            for i in range(N):
                cvv += alpha[i] * alpha[i] * v[i] * v[i]
            vdW = 0.0
            base = _U(step) * _U(N)
            for i in range(N):
                dW[i] = alpha[i] * sq * _normal(key, base + _U(i))
                vdW += v[i] * dW[i]
            nrm2 = 0.0
            for i in range(N):
                v[i] = (
                    v[i]
                    - 0.5 * sigma * sigma * (trace + alpha[i] * alpha[i] - 2.0 * cvv) * v[i] * dt
                    + sigma * (dW[i] - vdW * v[i])
                )
                nrm2 += v[i] * v[i]
            nrm = np.sqrt(nrm2)
            if nrm < 1e-12:
                status[r] = STATUS_STEP_FAILURE
                nrm = 1.0
            for i in range(N):
                v[i] /= nrm
            if row < len(chk_idx) and step + 1 == chk_idx[row]:
                for i in range(N):
                    out[row, i] = v[i]
                row += 1

    @njit(cache=True, parallel=True)
    def nb_velocity_paths(keys, v0s, alpha, sigma, dt, n_steps, chk_idx):
        R, N = v0s.shape
        out = np.empty((R, len(chk_idx), N))
        status = np.zeros(R, dtype=np.int8)
        for r in prange(R):
            v = v0s[r].copy()
            _nb_velocity_one(keys[r], v, alpha, sigma, dt, n_steps, chk_idx, out[r], status, r)
        return out, status

    @njit(cache=True)
    def _nb_position_one(
        key, v, alpha, sigma, dt, n_steps, chk_idx, with_level2, v_chk, x_chk, xx_chk, status, r
    ):
        N = v.shape[0]
        trace = 0.0
        for i in range(N):
            trace += alpha[i] * alpha[i]
        sq = np.sqrt(dt)
        x = np.zeros(N)
        xx = np.zeros((N, N))
        vprev = np.empty(N)
        xprev = np.empty(N)
        dW = np.empty(N)
        row = 0
        if chk_idx[0] == 0:
            for i in range(N):
                v_chk[0, i] = v[i]
                x_chk[0, i] = 0.0
            if with_level2:
                for i in range(N):
                    for j in range(N):
                        xx_chk[0, i, j] = 0.0
            row = 1
        for step in range(n_steps):
            cvv = 0.0
            for i in range(N):
                vprev[i] = v[i]
                xprev[i] = x[i]
                cvv += alpha[i] * alpha[i] * v[i] * v[i]
            vdW = 0.0
            base = _U(step) * _U(N)
            for i in range(N):
                dW[i] = alpha[i] * sq * _normal(key, base + _U(i))
                vdW += v[i] * dW[i]
            nrm2 = 0.0
            for i in range(N):
                v[i] = (
                    v[i]
                    - 0.5 * sigma * sigma * (trace + alpha[i] * alpha[i] - 2.0 * cvv) * v[i] * dt
                    + sigma * (dW[i] - vdW * v[i])
                )
                nrm2 += v[i] * v[i]
            nrm = np.sqrt(nrm2)
            if nrm < 1e-12:
                status[r] = STATUS_STEP_FAILURE
                nrm = 1.0
            for i in range(N):
                v[i] /= nrm
                x[i] = xprev[i] + 0.5 * dt * (vprev[i] + v[i])
            if with_level2:
                for i in range(N):
                    a = 0.5 * dt * xprev[i]
                    b = 0.5 * dt * x[i]
                    for j in range(N):
                        xx[i, j] += a * vprev[j] + b * v[j]
            if row < len(chk_idx) and step + 1 == chk_idx[row]:
                for i in range(N):
                    v_chk[row, i] = v[i]
                    x_chk[row, i] = x[i]
                if with_level2:
                    for i in range(N):
                        for j in range(N):
                            xx_chk[row, i, j] = xx[i, j]
                row += 1

    @njit(cache=True, parallel=True)
    def nb_position_paths(keys, v0s, alpha, sigma, dt, n_steps, chk_idx, with_level2):
        R, N = v0s.shape
        C = len(chk_idx)
        v_chk = np.empty((R, C, N))
        x_chk = np.empty((R, C, N))
        if with_level2:
            xx_chk = np.zeros((R, C, N, N))
        else:
            xx_chk = np.zeros((R, 1, 1, 1))
        status = np.zeros(R, dtype=np.int8)
        for r in prange(R):
            v = v0s[r].copy()
            _nb_position_one(
                keys[r], v, alpha, sigma, dt, n_steps, chk_idx, with_level2,
                v_chk[r], x_chk[r], xx_chk[r], status, r,
            )
        return v_chk, x_chk, xx_chk, status

    @njit(cache=True, inline="always")
    def _nb_pair_step(y, alpha, trace, dW, dt, status, r):
        N = y.shape[0]
        cyy = 0.0
        ydW = 0.0
        for i in range(N):
            cyy += alpha[i] * alpha[i] * y[i] * y[i]
            ydW += y[i] * dW[i]
        nrm2 = 0.0
        for i in range(N):
            y[i] = (
                y[i]
                - 0.5 * (trace + alpha[i] * alpha[i] - 2.0 * cyy) * y[i] * dt
                + (dW[i] - ydW * y[i])
            )
            nrm2 += y[i] * y[i]
        nrm = np.sqrt(nrm2)
        if nrm < 1e-12:
            status[r] = STATUS_STEP_FAILURE
            nrm = 1.0
        for i in range(N):
            y[i] /= nrm

    @njit(cache=True, parallel=True)
    def nb_coupled_paths(keys, v0s, w0s, alpha, dt, n_steps, save_stride):
        R, N = v0s.shape
        n_saved = n_steps // save_stride + 1
        n_out = np.empty((R, n_saved))
        status = np.zeros(R, dtype=np.int8)
        trace = 0.0
        for i in range(N):
            trace += alpha[i] * alpha[i]
        sq = np.sqrt(dt)
        for r in prange(R):
            v = v0s[r].copy()
            w = w0s[r].copy()
            dW = np.empty(N)
            dot = 0.0
            for i in range(N):
                dot += v[i] * w[i]
            n_out[r, 0] = 1.0 - dot
            row = 1
            for step in range(n_steps):
                base = _U(step) * _U(N)
                for i in range(N):
                    dW[i] = alpha[i] * sq * _normal(keys[r], base + _U(i))
                _nb_pair_step(v, alpha, trace, dW, dt, status, r)
                _nb_pair_step(w, alpha, trace, dW, dt, status, r)
                if (step + 1) % save_stride == 0:
                    dot = 0.0
                    for i in range(N):
                        dot += v[i] * w[i]
                    n_out[r, row] = 1.0 - dot
                    row += 1
        return n_out, status

    @njit(cache=True, parallel=True)
    def nb_lift_paths(keys, u0s, alpha, sigma, dt, n_steps, chk_idx):
        R, N = u0s.shape
        out = np.empty((R, len(chk_idx), N))
        status = np.zeros(R, dtype=np.int8)
        sq = np.sqrt(dt)
        for r in prange(R):
            u = u0s[r].copy()
            row = 0
            if chk_idx[0] == 0:
                for i in range(N):
                    out[r, 0, i] = u[i]
                row = 1
            for step in range(n_steps):
                nrm2 = 0.0
                for i in range(N):
                    nrm2 += u[i] * u[i]
                nrm = np.sqrt(nrm2)
                base = _U(step) * _U(N)
                low2 = 0.0
                for i in range(N):
                    u[i] = (
                        u[i]
                        + 0.5 * sigma * sigma * (-nrm2 + alpha[i] * alpha[i]) * u[i] * dt
                        + sigma * nrm * alpha[i] * sq * _normal(keys[r], base + _U(i))
                    )
                    low2 += u[i] * u[i]
                if np.sqrt(low2) < LIFT_FLOOR:
                    status[r] = STATUS_DEGENERATE
                if row < len(chk_idx) and step + 1 == chk_idx[row]:
                    for i in range(N):
                        out[r, row, i] = u[i]
                    row += 1
        return out, status

    @njit(cache=True, inline="always")
    def _nb_field_eval(coeffs, kvecs, th0, th1, drift):
        norm_const = 1.0 / (np.pi * np.sqrt(2.0))
        u1 = drift[0]
        u2 = drift[1]
        for j in range(kvecs.shape[0]):
            k1 = kvecs[j, 0]
            k2 = kvecs[j, 1]
            nrm = np.sqrt(k1 * k1 + k2 * k2)
            ph = k1 * th0 + k2 * th1
            amp = (coeffs[2 * j] * np.cos(ph) + coeffs[2 * j + 1] * np.sin(ph)) * (
                norm_const / nrm
            )
            u1 += amp * k2
            u2 -= amp * k1
        return u1, u2

    @njit(cache=True, parallel=True)
    def nb_advect_rk4(pts, kvecs, c0, cmid, c1, dt, drift):
        for p in prange(pts.shape[0]):
            t0 = pts[p, 0]
            t1 = pts[p, 1]
            a1, b1 = _nb_field_eval(c0, kvecs, t0, t1, drift)
            a2, b2 = _nb_field_eval(cmid, kvecs, t0 + 0.5 * dt * a1, t1 + 0.5 * dt * b1, drift)
            a3, b3 = _nb_field_eval(cmid, kvecs, t0 + 0.5 * dt * a2, t1 + 0.5 * dt * b2, drift)
            a4, b4 = _nb_field_eval(c1, kvecs, t0 + dt * a3, t1 + dt * b3, drift)
            pts[p, 0] = t0 + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            pts[p, 1] = t1 + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        return pts


# ---------------------------------------------------------------------------
# backend binding
# ---------------------------------------------------------------------------

if USE_NUMBA:
    velocity_paths = nb_velocity_paths
    position_paths = nb_position_paths
    coupled_paths = nb_coupled_paths
    lift_paths = nb_lift_paths
    advect_rk4 = nb_advect_rk4
else:
    velocity_paths = np_velocity_paths
    position_paths = np_position_paths
    coupled_paths = np_coupled_paths
    lift_paths = np_lift_paths
    advect_rk4 = np_advect_rk4
