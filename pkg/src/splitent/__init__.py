"""Numerical laboratory for operator-algebraic entanglement in finite dimension."""

__version__ = "0.1.0"
