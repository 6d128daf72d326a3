"""Equilibration of crystalline defects in Bravais lattices under long-range interactions."""

__version__ = "0.1.0"

from .cli import main

__all__ = ["__version__", "main"]
