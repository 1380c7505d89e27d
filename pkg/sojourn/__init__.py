"""Numerical sojourn relations on scattering and asymptotically hyperbolic model manifolds."""

__version__ = "0.1.0"
