"""Random walks, end boundaries and dimension diagnostics on free products."""

__version__ = "0.1.0"
