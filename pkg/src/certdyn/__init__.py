"""Locality bounds, state certification and circuit decompositions for lattice dynamics."""
__version__ = "0.1.0"
