"""Numerical laboratory for intransitive random dice."""

__version__ = "0.1.0"
