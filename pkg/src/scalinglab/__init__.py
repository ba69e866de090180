"""Numerical laboratory for scale-time equivalence and unified double descent."""

__version__ = "0.1.0"
