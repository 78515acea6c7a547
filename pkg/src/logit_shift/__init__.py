"""Recalibrate probability scores so they sum to an observed total."""

__version__ = "0.1.0"
