"""Incremental variational solvers for gradient-extended thermomechanics."""

__version__ = "0.1.0"
