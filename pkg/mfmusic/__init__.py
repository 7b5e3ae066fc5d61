"""Multifrequency MUSIC localization of small penetrable scatterers."""

__version__ = "0.3.0"
