"""Approximate conservation laws of a PT-symmetric inhomogeneous NLS family:
exact jet-space symbolics for verifying multiplier/density pairs, and a
split-step spectral solver for measuring the O(eps) drift they predict."""

__version__ = "0.1.0"
