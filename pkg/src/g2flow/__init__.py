"""Numerical G2 geometry on the flat 7-torus: algebra, discrete fields, flows."""

__version__ = "0.1.0"
