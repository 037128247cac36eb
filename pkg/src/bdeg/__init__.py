"""Numerical toolkit for degenerate Beltrami equations on the unit disk."""
__version__ = "0.1.0"
