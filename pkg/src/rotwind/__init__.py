"""rotwind: spectral toolkit for wind-driven fast-rotating fluids."""

__version__ = "0.1.0"
