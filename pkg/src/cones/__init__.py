"""Conditional neural fields with shift modulation for image-to-image translation."""

__version__ = "0.1.0"
