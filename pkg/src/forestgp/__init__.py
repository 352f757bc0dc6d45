"""Multi-output Gaussian process regression for species-specific forest attributes."""

__version__ = "0.1.0"
