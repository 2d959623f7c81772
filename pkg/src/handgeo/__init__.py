"""Hand-geometry biometric identification toolkit."""

__version__ = "0.1.0"
