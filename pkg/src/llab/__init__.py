"""Desk-scale spectral analysis of an atom coupled to a thermal Bose field."""

__version__ = "0.1.0"
