"""Numerical laboratory for the stochastic Airy equation and the beta-ensemble edge."""

__version__ = "0.1.0"
