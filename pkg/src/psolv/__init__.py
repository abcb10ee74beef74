"""Numerical toolkit for solvability of systems of pseudodifferential operators."""
__version__ = "0.1.0"
