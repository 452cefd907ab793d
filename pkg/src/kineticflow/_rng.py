"""Counter-based random number generation.

Every trajectory replica owns an independent stream identified by a 64-bit
key derived from the root seed with splitmix64-style mixing.  The n-th
normal variate of a stream is a pure function of (key, n), so ensembles are
reproducible regardless of execution order or parallel scheduling.  The
numba kernels implement the identical scalar recipe (see _kernels).
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX_A = np.uint64(0xBF58476D1CE4E5B9)
MIX_B = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53
_U = np.uint64


def mix64(z):
    """splitmix64 finalizer; accepts uint64 scalars or arrays, wraps mod 2^64."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U(30))) * MIX_A
        z = (z ^ (z >> _U(27))) * MIX_B
        return z ^ (z >> _U(31))


def derive_stream_seed(root_seed, index):
    """Stream key for replica `index` under `root_seed`.

    Injective in the index (odd-constant multiply plus bijective finalizer),
    so distinct replicas never share a stream, and independent of the order
    in which replicas are launched.
    """
    root = _U(int(root_seed) & 0xFFFFFFFFFFFFFFFF)
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(root + (idx + _U(1)) * GOLDEN)


def stream_keys(root_seed, n):
    """Keys for replicas 0..n-1 as a uint64 array."""
    return derive_stream_seed(root_seed, np.arange(n, dtype=np.uint64))


def normals(key, counters):
    """Standard normals indexed by counter, one per counter value.

    Box-Muller on two mixed uniforms per counter; identical to the scalar
    variant compiled into the numba kernels.
    """
    c = np.asarray(counters, dtype=np.uint64)
    key = np.asarray(key, dtype=np.uint64)
    with np.errstate(over="ignore"):
        c2 = _U(2) * c
        u1 = mix64(key + (c2 + _U(1)) * GOLDEN)
        u2 = mix64(key + (c2 + _U(2)) * GOLDEN)
    x1 = ((u1 >> _U(11)).astype(np.float64) + 0.5) * _INV_2_53
    x2 = (u2 >> _U(11)).astype(np.float64) * _INV_2_53
    return np.sqrt(-2.0 * np.log(x1)) * np.cos(2.0 * np.pi * x2)
