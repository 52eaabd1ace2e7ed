"""Numerical construction of nontrivial infinitesimal bendings of surfaces
with positive curvature away from isolated planar points."""

__version__ = "0.1.0"
