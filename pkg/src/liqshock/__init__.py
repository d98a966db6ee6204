"""Numerical engine for option pricing under liquidity shocks."""

__version__ = "0.1.0"
