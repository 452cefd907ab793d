"""Kinetic Brownian motion on truncated Hilbert spheres and its Lie
development on the volume-preserving diffeomorphism group of the flat
2-torus, with the statistics needed to verify the invariant measure,
mixing rate, homogenization covariance and level-2 rough-path limit."""

from ._kernels import BACKEND
from ._rng import derive_stream_seed

__all__ = ["BACKEND", "derive_stream_seed"]
__version__ = "0.1.0"
