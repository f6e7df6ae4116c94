"""Compliance-aware synthetic survey simulation and evaluation toolkit."""

__version__ = "0.1.0"
