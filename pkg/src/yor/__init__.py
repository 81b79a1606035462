"""Whole-body mobile-manipulation stack with a deterministic 2.5D simulator."""

__version__ = "0.1.0"
