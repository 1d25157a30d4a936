"""Factorized neural implicit DMD for parametric dynamics."""

__version__ = "0.1.0"
