"""Radial numerical laboratory for the isotropic Landau equation with very soft potentials."""

__version__ = "0.1.0"
