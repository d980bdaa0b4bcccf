"""Numerical laboratory for torsion functions of long convex planar domains."""

__version__ = "0.1.0"
