"""Numerical and spectral laboratory for self-similar blowup of the cubic wave equation in seven dimensions."""

__version__ = "0.1.0"
