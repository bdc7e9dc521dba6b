"""Spontaneous emission of a two-level atom in a rectangular cavity with lossy magnetodielectric inserts."""

__version__ = "0.1.0"
