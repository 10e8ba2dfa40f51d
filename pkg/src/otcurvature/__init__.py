"""Optimal-transport characterizations of sectional and p-Ricci curvature bounds."""

__version__ = "0.1.0"
