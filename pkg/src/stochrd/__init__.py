"""Stochastic reaction-diffusion simulator with transport noise and an exact exponent calculator."""

__version__ = "0.1.0"
