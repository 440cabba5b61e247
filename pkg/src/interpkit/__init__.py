"""Workbench for first-order interpretations between finite structures."""

__version__ = "0.1.0"
