"""Compound Poisson process with almost-uniform catastrophes: simulation,
exact laws, and the local large-deviation rate function."""

__version__ = "0.1.0"
