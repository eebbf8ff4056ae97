"""Prescribed scalar curvature flow for spacelike graphs in Lorentzian warped products."""

__version__ = "0.1.0"
