"""Learned and classical line-spectral estimation on a frequency grid."""

__version__ = "0.1.0"
