"""Exact spectral-subspace rotation for off-diagonally perturbed block operators,
checked against classical and relative tan 2-theta bounds."""

__version__ = "0.1.0"
