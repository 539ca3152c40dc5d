"""Optimal control of thin-film flow over a flexible substrate."""

__version__ = "0.1.0"
