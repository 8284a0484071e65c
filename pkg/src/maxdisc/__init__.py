"""Simulation and verification of joint continuous/grid maxima of Gaussian vector processes."""

__version__ = "0.1.0"
