"""Distributed sampling-based trajectory planning for multi-robot STL specifications."""

__version__ = "0.1.0"
