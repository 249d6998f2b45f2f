"""Sampling frames and Riesz sequences of reproducing kernels on locally compact groups."""

__version__ = "0.3.0"
