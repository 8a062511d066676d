"""Pseudo-spectral lab for dynamical Phi^4_3 via a multiplicative transform."""

__version__ = "0.1.0"
