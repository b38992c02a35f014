"""Numerical constructions of embedded eigenvalues for T(D) + V."""

__version__ = "0.1.0"
