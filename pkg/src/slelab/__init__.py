"""Simulation and numerical-verification lab for SLE(kappa; rho) processes."""

__version__ = "0.1.0"
