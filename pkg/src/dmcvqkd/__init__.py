"""Simulation and post-processing toolkit for QPSK continuous-variable QKD."""

__version__ = "0.1.0"
