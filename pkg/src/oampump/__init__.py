"""Topological OAM switching in a synthetic frequency-degenerate cavity lattice."""

__version__ = "0.1.0"
