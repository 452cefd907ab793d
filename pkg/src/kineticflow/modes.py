"""Divergence-free Fourier eigenmodes of the flat 2-torus and their Lie algebra.

Conventions (fixed here, documented once):

* Torus is [0, 2*pi)^2 with plain Lebesgue measure.
* A cosine mode with lattice vector k = (k1, k2) is the field
  cos(k.theta) * kperp / |k| with kperp = (k2, -k1); the sine mode uses sin.
  These carry only the |k|^{-1} prefactor; their L2 norm is pi*sqrt(2), so
  the orthonormalizing constant is L2_NORMALIZER = 1/(pi*sqrt(2)).
* Lattice vectors live on the half-lattice k1 > 0 or (k1 == 0 and k2 > 0);
  the opposite vector spans the same two-dimensional space (cosine modes
  flip sign under k -> -k, sine modes are invariant), so the full lattice
  would double-count.
* Mode order: ascending |k|^2, then lexicographic (k1, k2), cosine before
  sine.  Everything downstream (structure constants, spectra, trajectories)
  indexes coefficients in this order.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidCutoffError,
    ResolutionError,
    TruncationError,
)

COS = "cos"
SIN = "sin"

#: L2-orthonormalizing constant for the |k|^{-1}-prefactored fields.
L2_NORMALIZER = 1.0 / (np.pi * np.sqrt(2.0))


@dataclass(frozen=True)
class ModeIndex:
    k1: int
    k2: int
    parity: str  # COS or SIN

    def __post_init__(self):
        if self.parity not in (COS, SIN):
            raise ValueError(f"parity must be {COS!r} or {SIN!r}")
        if not (self.k1 > 0 or (self.k1 == 0 and self.k2 > 0)):
            raise ValueError(f"lattice vector {(self.k1, self.k2)} not on the half-lattice")

    @property
    def k(self):
        return (self.k1, self.k2)

    @property
    def eigenvalue(self):
        """|lambda| of minus the vector Laplacian: k1^2 + k2^2 >= 1."""
        return self.k1 * self.k1 + self.k2 * self.k2


@dataclass(frozen=True)
class ModeTable:
    """All half-lattice modes with |k|^2 <= K^2, deterministically ordered."""

    cutoff: int
    modes: tuple = field(repr=False)

    @property
    def dim(self):
        return len(self.modes)

    @property
    def kvecs(self):
        """(dim/2, 2) int array of lattice vectors, one per cos/sin pair."""
        return np.array([m.k for m in self.modes[::2]], dtype=np.int64)

    @property
    def eigenvalues(self):
        """(dim,) array of |lambda_n| = |k_n|^2 in mode order."""
        return np.array([m.eigenvalue for m in self.modes], dtype=np.float64)

    def index(self, mode):
        return self.modes.index(mode)


def half_lattice_points(K):
    pts = [
        (k1, k2)
        for k1 in range(0, K + 1)
        for k2 in range(-K, K + 1)
        if (k1 > 0 or (k1 == 0 and k2 > 0)) and k1 * k1 + k2 * k2 <= K * K
    ]
    pts.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k))
    return pts


def enumerate_modes(K):
    """Mode table at cutoff K; constant fields (k = 0) are excluded."""
    K = int(K)
    if K < 1:
        raise InvalidCutoffError(f"cutoff must be >= 1, got {K}")
    modes = []
    for k in half_lattice_points(K):
        modes.append(ModeIndex(k[0], k[1], COS))
        modes.append(ModeIndex(k[0], k[1], SIN))
    return ModeTable(cutoff=K, modes=tuple(modes))


def eval_mode_field(mode, theta):
    """Field value of one mode at theta, |k|^{-1} prefactor only.

    theta: array (..., 2); returns array (..., 2).  Multiply by
    L2_NORMALIZER for the orthonormal field.
    """
    theta = np.asarray(theta, dtype=np.float64)
    k1, k2 = mode.k1, mode.k2
    norm = np.hypot(k1, k2)
    phase = k1 * theta[..., 0] + k2 * theta[..., 1]
    tr = np.cos(phase) if mode.parity == COS else np.sin(phase)
    return np.stack([k2 * tr / norm, -k1 * tr / norm], axis=-1)


def eval_field_sum(coeffs, table, theta, normalized=True):
    """Velocity field sum_n c_n e_n(theta) for coefficients in mode order.

    With normalized=True the basis is L2-orthonormal; otherwise the raw
    |k|^{-1}-prefactored fields.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape[-1] != table.dim:
        raise DimensionMismatchError(f"expected {table.dim} coefficients, got {coeffs.shape[-1]}")
    theta = np.asarray(theta, dtype=np.float64)
    kv = table.kvecs.astype(np.float64)
    phase = theta[..., 0, None] * kv[:, 0] + theta[..., 1, None] * kv[:, 1]  # (..., P)
    norms = np.hypot(kv[:, 0], kv[:, 1])
    amp = coeffs[..., 0::2] * np.cos(phase) + coeffs[..., 1::2] * np.sin(phase)
    amp = amp / norms
    if normalized:
        amp = amp * L2_NORMALIZER
    u1 = np.sum(amp * kv[:, 1], axis=-1)
    u2 = -np.sum(amp * kv[:, 0], axis=-1)
    return np.stack([u1, u2], axis=-1)


def _grid(G):
    t = np.arange(G) * (2.0 * np.pi / G)
    t1, t2 = np.meshgrid(t, t, indexing="ij")
    return np.stack([t1, t2], axis=-1)


def _check_grid(G, K):
    if G < 4 * K + 2:
        raise ResolutionError(f"grid {G} under-resolved for cutoff {K}: need G >= {4 * K + 2}")


def divergence_residual(mode, G):
    """Max over a G x G grid of the analytic divergence of one mode.

    The closed-form partials give div = |k|^{-1} (-k2 k1 + k1 k2) trig = 0
    identically; the residual is evaluated rather than asserted so that any
    change to the field formulas is caught.
    """
    kmax = int(np.ceil(np.sqrt(mode.eigenvalue)))
    _check_grid(G, kmax)
    th = _grid(G)
    k1, k2 = mode.k1, mode.k2
    norm = np.hypot(k1, k2)
    phase = k1 * th[..., 0] + k2 * th[..., 1]
    dtr = -np.sin(phase) if mode.parity == COS else np.cos(phase)
    div = (k2 * k1 * dtr - k1 * k2 * dtr) / norm
    return float(np.abs(div).max())


def gram_matrix(table, G):
    """Quadrature L2 Gram matrix of the orthonormalized fields.

    Exactly the identity below the aliasing threshold (discrete
    trigonometric orthogonality).
    """
    _check_grid(G, table.cutoff)
    th = _grid(G)
    w = (2.0 * np.pi / G) ** 2
    N = table.dim
    fields = np.empty((N, G, G, 2))
    for i, m in enumerate(table.modes):
        fields[i] = eval_mode_field(m, th) * L2_NORMALIZER
    flat = fields.reshape(N, -1)
    return (flat @ flat.T) * w


def bracket_oracle(x, y, table, out_table, G=None):
    """Quadrature Lie bracket [X, Y] = X.grad Y - Y.grad X of two fields.

    Inputs and output are coefficients in the |k|^{-1}-prefactored
    (paper-normalized) basis.  The bracket is evaluated pointwise from the
    closed-form partial derivatives of the trigonometric fields, then
    projected onto out_table by quadrature.  Pure reference implementation:
    the closed-form structure constants are tested against this and the
    fast paths use those.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != (table.dim,) or y.shape != (table.dim,):
        raise DimensionMismatchError("coefficient length does not match the mode table")
    if out_table.cutoff < 2 * table.cutoff:
        raise TruncationError(
            f"output cutoff {out_table.cutoff} < 2*{table.cutoff}: bracket frequencies would alias"
        )
    if G is None:
        G = 4 * out_table.cutoff + 4
    _check_grid(G, out_table.cutoff)
    th = _grid(G)

    def field_and_jacobian(c):
        F = np.zeros((G, G, 2))
        J = np.zeros((G, G, 2, 2))
        for ci, m in zip(c, table.modes):
            if ci == 0.0:
                continue
            k1, k2 = m.k1, m.k2
            norm = np.hypot(k1, k2)
            phase = k1 * th[..., 0] + k2 * th[..., 1]
            if m.parity == COS:
                tr, dtr = np.cos(phase), -np.sin(phase)
            else:
                tr, dtr = np.sin(phase), np.cos(phase)
            vec = np.array([k2 / norm, -k1 / norm])
            kv = np.array([k1, k2], dtype=np.float64)
            F += ci * tr[..., None] * vec
            J += ci * dtr[..., None, None] * (vec[:, None] * kv[None, :])
        return F, J

    FX, JX = field_and_jacobian(x)
    FY, JY = field_and_jacobian(y)
    B = np.einsum("...jl,...l->...j", JY, FX) - np.einsum("...jl,...l->...j", JX, FY)

    w = (2.0 * np.pi / G) ** 2
    inv_sq_norm = 1.0 / (2.0 * np.pi**2)  # 1 / ||a_k||_{L2}^2
    out = np.empty(out_table.dim)
    for i, m in enumerate(out_table.modes):
        e = eval_mode_field(m, th)
        out[i] = np.sum(e * B) * w * inv_sq_norm
    return out


def _fold(k):
    """Fold a lattice vector into the half-lattice: (folded, cos_sign, sin_sign)."""
    if k[0] > 0 or (k[0] == 0 and k[1] > 0):
        return k, 1.0, 1.0
    return (-k[0], -k[1]), -1.0, 1.0


def closed_form_bracket(mk, ml):
    """Bracket of two basis modes expanded over modes, paper normalization.

    With g = (k1*l2 - k2*l1) / (2 |k| |l|) and m+- = k +- l:

        [cos_k, cos_l] = g (|m-| sin_{m-} + |m+| sin_{m+})
        [sin_k, sin_l] = g (|m-| sin_{m-} - |m+| sin_{m+})
        [cos_k, sin_l] = g (|m-| cos_{m-} - |m+| cos_{m+})
        [sin_k, cos_l] = g (-|m-| cos_{m-} - |m+| cos_{m+})

    followed by half-lattice folding (cos_{-m} = -cos_m, sin_{-m} = sin_m).
    Returns {(lattice vector, parity): coefficient}; drops the zero vector.
    """
    k, l = mk.k, ml.k
    d = k[0] * l[1] - k[1] * l[0]
    if d == 0:
        return {}
    g = d / (2.0 * np.hypot(*k) * np.hypot(*l))
    m_minus = (k[0] - l[0], k[1] - l[1])
    m_plus = (k[0] + l[0], k[1] + l[1])
    out = {}

    def add(mvec, parity, coef):
        if mvec == (0, 0) or coef == 0.0:
            return
        folded, cs, ss = _fold(mvec)
        sign = cs if parity == COS else ss
        key = (folded, parity)
        out[key] = out.get(key, 0.0) + coef * sign

    am = np.hypot(*m_minus)
    ap = np.hypot(*m_plus)
    pk, pl = mk.parity, ml.parity
    if pk == COS and pl == COS:
        add(m_minus, SIN, g * am)
        add(m_plus, SIN, g * ap)
    elif pk == SIN and pl == SIN:
        add(m_minus, SIN, g * am)
        add(m_plus, SIN, -g * ap)
    elif pk == COS and pl == SIN:
        add(m_minus, COS, g * am)
        add(m_plus, COS, -g * ap)
    else:
        add(m_minus, COS, -g * am)
        add(m_plus, COS, -g * ap)
    return out


@dataclass
class StructureTensor:
    """Sparse structure constants c^n_{k,l} in the L2-orthonormal basis.

    entries maps (n, k, l) index triples to coefficients; dropped_mass is
    the total squared L2 coefficient mass lost to the Galerkin cutoff,
    summed over ordered mode pairs.
    """

    dim: int
    entries: dict
    dropped_mass: float

    def value(self, n, k, l):
        return self.entries.get((n, k, l), 0.0)


def structure_constants(table):
    """Closed-form c^n_{k,l} = <[e_k, e_l], e_n>_{L2}, Galerkin-truncated.

    Built for k < l and mirrored with exact negation, so antisymmetry in
    the lower indices holds bit-exactly.
    """
    pos = {(m.k, m.parity): i for i, m in enumerate(table.modes)}
    entries = {}
    dropped = 0.0
    inv = 1.0 / (np.pi * np.sqrt(2.0))  # paper-basis coefficient -> orthonormal
    for k_i in range(table.dim):
        for l_i in range(k_i + 1, table.dim):
            for key, coef in closed_form_bracket(table.modes[k_i], table.modes[l_i]).items():
                val = coef * inv
                if key in pos:
                    n_i = pos[key]
                    entries[(n_i, k_i, l_i)] = val
                    entries[(n_i, l_i, k_i)] = -val
                else:
                    dropped += 2.0 * val * val  # both (k,l) and (l,k)
    return StructureTensor(dim=table.dim, entries=entries, dropped_mass=dropped)


@dataclass
class ChristoffelTensor:
    """Christoffel coefficients of the L2 metric from the structure constants.

    gamma[k] is the N x N matrix of the antisymmetric endomorphism
    Gamma_k = Gamma_{k,.}^. ; antisymmetry holds bit-exactly by mirrored
    construction.
    """

    gamma: np.ndarray  # (N, N, N), gamma[k, n, l] = Gamma^n_{k,l}

    @property
    def dim(self):
        return self.gamma.shape[0]

    def matrix(self, k):
        return self.gamma[k]

    def contract(self, w):
        """Dense matrix of Gamma(w) = sum_k w^k Gamma_k."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise DimensionMismatchError(f"expected {self.dim} coefficients, got {w.shape}")
        return np.tensordot(w, self.gamma, axes=(0, 0))


def christoffel_tensor(c):
    """Gamma^n_{k,l} = (c^n_{kl} - c^k_{ln} + c^l_{nk}) / 2 from sparse c.

    Each sparse entry c^a_{b,d} feeds three slots:

        Gamma^a_{b,d} += c/2      (first term, with (n,k,l) = (a,b,d))
        Gamma^d_{a,b} -= c/2      (second term: -c^k_{l,n} at (k,l,n) = (a,b,d))
        Gamma^b_{d,a} += c/2      (third term: +c^l_{n,k} at (l,n,k) = (a,b,d))

    A final antisymmetrization of each Gamma_k matrix makes the invariant
    Gamma_k + Gamma_k^T = 0 hold bit-exactly (it is a rounding-level no-op
    mathematically, since the formula is already antisymmetric in (n, l)).
    """
    N = c.dim
    gamma = np.zeros((N, N, N))
    if c.entries:
        triples = np.array(list(c.entries.keys()), dtype=np.int64)
        vals = np.fromiter(c.entries.values(), dtype=np.float64, count=len(c.entries))
        a, b, d = triples[:, 0], triples[:, 1], triples[:, 2]
        np.add.at(gamma, (b, a, d), 0.5 * vals)
        np.add.at(gamma, (a, d, b), -0.5 * vals)
        np.add.at(gamma, (d, b, a), 0.5 * vals)
    gamma = 0.5 * (gamma - np.transpose(gamma, (0, 2, 1)))
    return ChristoffelTensor(gamma=gamma)
