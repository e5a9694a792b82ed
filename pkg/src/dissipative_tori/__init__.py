"""Invariant circles of the conformally symplectic standard map near the symplectic limit."""

__version__ = "0.1.0"
