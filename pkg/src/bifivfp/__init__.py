"""Bi-fidelity stochastic collocation for a multi-species kinetic-fluid model."""

__version__ = "0.1.0"
