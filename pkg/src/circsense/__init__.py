"""Structured compressed sensing with partial random circulant matrices."""

__version__ = "0.1.0"
