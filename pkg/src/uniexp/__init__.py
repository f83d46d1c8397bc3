"""Numerical laboratory for uniformly expanding random walks on the 2-torus."""

__version__ = "0.1.0"
