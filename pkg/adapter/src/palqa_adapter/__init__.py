"""Span-prediction adapter for the palqa backend wire protocol."""

__version__ = "0.1.0"
