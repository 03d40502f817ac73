"""Flat free-boundary ground states of -Δu + u^α = λu^β and their stability."""

__version__ = "0.1.0"
