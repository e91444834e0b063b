"""Aligned network diagonalization for K x K x K two-hop wireless networks."""

__version__ = "0.1.0"
