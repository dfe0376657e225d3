"""Numerical toolkit for the vanishing-mass limit of compliance minimization."""

__version__ = "0.1.0"
