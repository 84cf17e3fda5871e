"""Computable content of hard Lefschetz for pseudoeffective line bundles."""

__version__ = "0.1.0"
