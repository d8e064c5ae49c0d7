"""Argument mining toolkit for ECHR-style court decisions."""

__version__ = "0.1.0"
