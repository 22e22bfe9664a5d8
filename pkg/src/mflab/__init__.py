"""Numerical laboratory for mean-field equations with intensity measures."""

__version__ = "0.1.0"
