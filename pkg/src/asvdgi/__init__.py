"""Dual-mode adaptive SVD ghost imaging simulation."""
__version__ = "0.1.0"
