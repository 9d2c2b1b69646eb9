"""Discrete p-harmonic maps into model targets: solvers, Hessian comparison and verification."""

__version__ = "0.1.0"
