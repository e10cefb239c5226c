"""turbface: synthesize, restore, and evaluate turbulence-degraded face images."""

__version__ = "0.1.0"
