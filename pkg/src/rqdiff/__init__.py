"""Radial quasilinear problems with a power-type diffusion factor."""

__version__ = "0.1.0"
