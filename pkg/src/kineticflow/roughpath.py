"""Level-2 rough paths on dyadic grids: lifts, Chen algebra, diagnostics.

A :class:`RoughLevel2` stores level-1 increments and level-2 tensors on the
2^L base intervals of a dyadic grid plus the full binary pyramid of merged
intervals.  Every merged node is defined through Chen's relation

    XX[s, t] = XX[s, u] + X[s, u] (x) X[u, t] + XX[u, t]

applied to its two children, so on the dyadic tree the relation holds
bit-exactly by construction; :func:`chen_recheck` verifies that property
independently.  Quadrature error only ever enters through the base
intervals.
"""
from dataclasses import dataclass

import numpy as np

from .errors import GridError, InvalidExponentError

HS = "hilbert-schmidt"


def compose_pair(x1, xx1, x2, xx2):
    """Chen composition of adjacent increments: [s,u] then [u,t]."""
    return x1 + x2, xx1 + xx2 + np.outer(x1, x2)


@dataclass
class RoughLevel2:
    """Dyadic-grid rough path: times (n+1,), pyramid levels of (X, XX) arrays.

    levels[0] holds the base intervals; levels[l] the merged intervals of
    length 2^l base steps.  Hand-built instances may carry a single level.
    """

    times: np.ndarray
    levels: list  # [(X (m, d), XX (m, d, d)), ...]

    @property
    def n_base(self):
        return self.levels[0][0].shape[0]

    @property
    def dim(self):
        return self.levels[0][0].shape[1]

    @classmethod
    def from_base(cls, times, incr, tensor):
        """Build the dyadic pyramid from base-interval values via Chen.

        Non-power-of-two interval counts (possible after composing pieces
        of unequal length) keep the base level only; every operation still
        works through :meth:`pair`, there are just no merged tree nodes.
        """
        incr = np.asarray(incr, dtype=np.float64)
        tensor = np.asarray(tensor, dtype=np.float64)
        n = incr.shape[0]
        if n & (n - 1):
            return cls(times=np.asarray(times, dtype=np.float64), levels=[(incr, tensor)])
        levels = [(incr, tensor)]
        X, XX = incr, tensor
        while X.shape[0] > 1:
            m = X.shape[0] // 2
            Xl, XXl = X[0::2], XX[0::2]
            Xr, XXr = X[1::2], XX[1::2]
            Xm = Xl + Xr
            XXm = XXl + XXr + Xl[:, :, None] * Xr[:, None, :]
            levels.append((Xm, XXm))
            X, XX = Xm, XXm
        return cls(times=np.asarray(times, dtype=np.float64), levels=levels)

    def pair(self, i, j):
        """(X, XX) over base-grid points i < j, folded left to right over
        the largest aligned dyadic blocks."""
        if not (0 <= i < j <= self.n_base):
            raise GridError(f"invalid base-grid pair ({i}, {j})")
        d = self.dim
        X = np.zeros(d)
        XX = np.zeros((d, d))
        pos = i
        first = True
        while pos < j:
            lvl = 0
            while (
                lvl + 1 < len(self.levels)
                and pos % (1 << (lvl + 1)) == 0
                and pos + (1 << (lvl + 1)) <= j
            ):
                lvl += 1
            Xb, XXb = self.levels[lvl]
            idx = pos >> lvl
            if first:
                X, XX = Xb[idx].copy(), XXb[idx].copy()
                first = False
            else:
                X, XX = compose_pair(X, XX, Xb[idx], XXb[idx])
            pos += 1 << lvl
        return X, XX

    def whole(self):
        """(X, XX) over the full interval."""
        return self.pair(0, self.n_base)


def chen_recheck(rp):
    """Independently recompose every pyramid node from its children and
    compare bitwise.  Returns the number of dyadic triples checked."""
    checked = 0
    for lvl in range(1, len(rp.levels)):
        Xc, XXc = rp.levels[lvl - 1]
        Xp, XXp = rp.levels[lvl]
        for m in range(Xp.shape[0]):
            X, XX = compose_pair(Xc[2 * m], XXc[2 * m], Xc[2 * m + 1], XXc[2 * m + 1])
            if not (np.array_equal(X, Xp[m]) and np.array_equal(XX, XXp[m])):
                raise GridError(f"Chen relation violated at level {lvl}, node {m}")
            checked += 1
    return checked


def canonical_lift(times, positions, level, velocities=None):
    """Canonical level-2 lift of a sampled path onto 2^level base intervals.

    With velocity samples the base tensors are the trapezoid quadrature of
    int (x_u - x_s) (x) v_u du; without them the chord (piecewise-linear)
    quadrature is used, which is the exact lift of the interpolated path.
    The fine grid must refine the dyadic grid exactly.
    """
    times = np.asarray(times, dtype=np.float64)
    x = np.asarray(positions, dtype=np.float64)
    n_base = 1 << level
    n_fine = len(times) - 1
    if n_fine % n_base:
        raise GridError(f"fine grid ({n_fine} steps) does not refine 2^{level} base intervals")
    m = n_fine // n_base
    d = x.shape[1]
    incr = np.empty((n_base, d))
    tensor = np.empty((n_base, d, d))
    for b in range(n_base):
        s = b * m
        seg = x[s : s + m + 1] - x[s]
        dx = np.diff(seg, axis=0)
        if velocities is None:
            mid = 0.5 * (seg[:-1] + seg[1:])
            tensor[b] = np.einsum("ki,kj->ij", mid, dx)
        else:
            v = velocities[s : s + m + 1]
            h = np.diff(times[s : s + m + 1])
            f = seg[:, :, None] * v[:, None, :]
            tensor[b] = np.sum(0.5 * h[:, None, None] * (f[:-1] + f[1:]), axis=0)
        incr[b] = seg[-1]
    coarse_times = times[::m]
    return RoughLevel2.from_base(coarse_times, incr, tensor)


def lift_from_prefix(times, x_prefix, xx_prefix):
    """RoughLevel2 from running values X_t - X_0 and int_0^t (X-X_0) (x) dX.

    Inverts Chen against the prefix data to recover per-interval tensors;
    used for ensemble checkpoints accumulated inside the SDE kernels.
    """
    x_prefix = np.asarray(x_prefix, dtype=np.float64)
    xx_prefix = np.asarray(xx_prefix, dtype=np.float64)
    incr = np.diff(x_prefix, axis=0)
    n = incr.shape[0]
    tensor = np.empty_like(xx_prefix[:-1])
    for b in range(n):
        cross = np.outer(x_prefix[b], incr[b])
        tensor[b] = xx_prefix[b + 1] - xx_prefix[b] - cross
    return RoughLevel2.from_base(times, incr, tensor)


def chen_compose(a, b):
    """Concatenate two rough paths with matching junction point."""
    if a.times[-1] != b.times[0]:
        raise GridError(f"junction mismatch: {a.times[-1]} vs {b.times[0]}")
    if a.dim != b.dim:
        raise GridError("dimension mismatch")
    Xa, XXa = a.levels[0]
    Xb, XXb = b.levels[0]
    times = np.concatenate([a.times, b.times[1:]])
    return RoughLevel2.from_base(
        times, np.concatenate([Xa, Xb]), np.concatenate([XXa, XXb])
    )


def geometric_defect(rp):
    """Max over stored intervals of || sym(XX) - X (x) X / 2 ||_HS."""
    worst = 0.0
    for X, XX in rp.levels:
        sym = 0.5 * (XX + np.swapaxes(XX, 1, 2))
        dev = sym - 0.5 * X[:, :, None] * X[:, None, :]
        worst = max(worst, float(np.sqrt((dev**2).sum(axis=(1, 2)).max())))
    return worst


def holder_norms(rp, p):
    """(level-1 1/p-Hoelder, level-2 2/p-Hoelder) over all base-grid pairs."""
    if not 2.0 <= p < 3.0:
        raise InvalidExponentError(f"p must lie in [2, 3), got {p}")
    n = rp.n_base
    h1 = 0.0
    h2 = 0.0
    for i in range(n):
        for j in range(i + 1, n + 1):
            X, XX = rp.pair(i, j)
            dt = rp.times[j] - rp.times[i]
            h1 = max(h1, float(np.linalg.norm(X)) / dt ** (1.0 / p))
            h2 = max(h2, float(np.sqrt((XX**2).sum())) / dt ** (2.0 / p))
    return h1, h2


def levy_area(rp_or_tensor, i=0, j=1):
    """Antisymmetric part entry (i, j) of the whole-interval tensor."""
    if isinstance(rp_or_tensor, RoughLevel2):
        _, XX = rp_or_tensor.whole()
    else:
        XX = np.asarray(rp_or_tensor)
    return 0.5 * float(XX[i, j] - XX[j, i])


def _brownian_fine_path(C, n_fine, rng, n_replicas):
    C = np.asarray(C, dtype=np.float64)
    evals, evecs = np.linalg.eigh(0.5 * (C + C.T))
    if evals.min() < -1e-10 * max(evals.max(), 1.0):
        raise ValueError("covariance must be positive semidefinite")
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    d = C.shape[0]
    dw = rng.standard_normal((n_replicas, n_fine, d)) @ root.T * np.sqrt(1.0 / n_fine)
    w = np.concatenate([np.zeros((n_replicas, 1, d)), np.cumsum(dw, axis=1)], axis=1)
    return w


def brownian_rough_oracle(C, n_fine, level, rng):
    """Canonical lift of one piecewise-linear Brownian path with covariance C.

    The fine-grid chord lift converges to the Stratonovich lift as the fine
    step shrinks; this is the reference object for the homogenization limit.
    """
    w = _brownian_fine_path(C, n_fine, rng, 1)[0]
    times = np.linspace(0.0, 1.0, n_fine + 1)
    return canonical_lift(times, w, level)


def brownian_endpoint_samples(C, n_fine, n_replicas, rng):
    """(X_1, XX over [0,1]) samples of the Brownian rough path oracle.

    Vectorized chord lift over replicas; returns arrays (R, d) and (R, d, d).
    """
    w = _brownian_fine_path(C, n_fine, rng, n_replicas)
    dx = np.diff(w, axis=1)
    mid = 0.5 * (w[:, :-1] + w[:, 1:]) - w[:, :1]
    XX = np.einsum("rki,rkj->rij", mid, dx)
    X = w[:, -1] - w[:, 0]
    return X, XX
