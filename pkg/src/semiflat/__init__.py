"""Numerics for the semi-flat SYZ correspondence on tropical manifolds."""

__version__ = "0.1.0"
