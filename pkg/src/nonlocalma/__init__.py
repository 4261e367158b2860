"""Numerical toolkit for non-local operators and radial Monge-Ampere far fields."""

__version__ = "0.1.0"
